//! Class co-occurrence statistics and the penalization matrix derived from
//! them.
//!
//! Three phases:
//! 1. utterance-level co-occurrence counts (symmetric, diagonal = number of
//!    utterances where the class got at least one vote),
//! 2. column-normalized co-existing weights `w[j][z] = m[j][z] / m[z][z]`,
//! 3. penalties `p = 1 - w`.

use std::io::{Read, Write};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoCountMatrix {
    pub classes: Vec<String>,
    pub values: Array2<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoWeightMatrix {
    pub classes: Vec<String>,
    pub values: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyMatrix {
    pub classes: Vec<String>,
    pub values: Array2<f64>,
}

impl CoCountMatrix {
    pub fn zeros(classes: Vec<String>) -> Self {
        let c = classes.len();
        Self {
            classes,
            values: Array2::zeros((c, c)),
        }
    }

    /// Adds one utterance whose chosen classes are `set` (indices, any order,
    /// duplicates ignored).
    pub fn add_set(&mut self, set: &[usize]) {
        let mut s = set.to_vec();
        s.sort_unstable();
        s.dedup();
        for (a, &j) in s.iter().enumerate() {
            self.values[[j, j]] += 1;
            for &z in &s[a + 1..] {
                self.values[[j, z]] += 1;
                self.values[[z, j]] += 1;
            }
        }
    }

    pub fn from_sets<'a>(classes: Vec<String>, sets: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut m = Self::zeros(classes);
        for s in sets {
            m.add_set(s);
        }
        m
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn as_f64(&self) -> Array2<f64> {
        self.values.mapv(|v| v as f64)
    }
}

impl std::ops::Add for &CoCountMatrix {
    type Output = CoCountMatrix;
    fn add(self, rhs: &CoCountMatrix) -> CoCountMatrix {
        CoCountMatrix {
            classes: self.classes.clone(),
            values: &self.values + &rhs.values,
        }
    }
}

/// Phase 1: utterance-level co-occurrence counts over the corpus.
pub fn co_counts(corpus: &Corpus) -> CoCountMatrix {
    let mut m = CoCountMatrix::zeros(corpus.class_set.names().to_vec());
    for vc in corpus.vote_counts() {
        let set: Vec<usize> = vc
            .counts
            .iter()
            .enumerate()
            .filter(|&(_, &n)| n > 0)
            .map(|(j, _)| j)
            .collect();
        m.add_set(&set);
    }
    m
}

/// Phase 2: normalize each column by its diagonal entry.
pub fn co_weights(cc: &CoCountMatrix) -> Result<CoWeightMatrix> {
    let c = cc.num_classes();
    if let Some(z) = (0..c).find(|&z| cc.values[[z, z]] == 0) {
        return Err(Error::AbsentClass(cc.classes[z].clone()));
    }
    let values = Array2::from_shape_fn((c, c), |(j, z)| cc.values[[j, z]] as f64 / cc.values[[z, z]] as f64);
    Ok(CoWeightMatrix {
        classes: cc.classes.clone(),
        values,
    })
}

/// Phase 3: `p = 1 - w`.
pub fn penalty(wm: &CoWeightMatrix) -> Result<PenaltyMatrix> {
    if wm.values.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
        return Err(Error::InvalidArgument("co-existing weights must lie in [0, 1]".into()));
    }
    Ok(PenaltyMatrix {
        classes: wm.classes.clone(),
        values: wm.values.mapv(|w| 1.0 - w),
    })
}

/// All three phases for a corpus.
pub fn penalty_pipeline(corpus: &Corpus) -> Result<(CoCountMatrix, CoWeightMatrix, PenaltyMatrix)> {
    let cc = co_counts(corpus);
    let wm = co_weights(&cc)?;
    let pm = penalty(&wm)?;
    Ok((cc, wm, pm))
}

impl PenaltyMatrix {
    pub fn zeros(classes: Vec<String>) -> Self {
        let c = classes.len();
        Self {
            classes,
            values: Array2::zeros((c, c)),
        }
    }

    pub fn from_array(classes: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (classes.len(), classes.len()) {
            return Err(Error::shape(
                format!("{0}x{0}", classes.len()),
                format!("{:?}", values.dim()),
            ));
        }
        Ok(Self { classes, values })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

/// `out[j] = sum_z p[j][z]`: the per-class weight a penalty matrix puts on
/// class `j`'s loss term.
pub fn row_sum_weights(p: &PenaltyMatrix) -> Vec<f64> {
    p.values.sum_axis(Axis(1)).to_vec()
}

pub fn frobenius_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Writes a square matrix as CSV with class names heading rows and columns.
pub fn write_matrix_csv<W: Write, T: ToString>(classes: &[String], values: &Array2<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![String::new()];
    header.extend(classes.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in classes.iter().zip(values.rows()) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(ToString::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let classes: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let c = classes.len();
    let mut values = Array2::zeros((c, c));
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i >= c || rec.len() != c + 1 || rec.get(0) != Some(classes[i].as_str()) {
            return Err(Error::shape(format!("{c}x{c} matrix in class order"), format!("row {}", i + 1)));
        }
        for (z, cell) in rec.iter().skip(1).enumerate() {
            values[[i, z]] = cell
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("matrix row {}: {e}", i + 1)))?;
        }
        rows += 1;
    }
    if rows != c {
        return Err(Error::shape(format!("{c} rows"), rows));
    }
    Ok((classes, values))
}
