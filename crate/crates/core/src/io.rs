//! Delimited-text tables shared by the CLI and the library: feature files,
//! encoded label files, and atomic output writes.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Rows of numeric values keyed by utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: Array2<f64>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, columns: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (ids.len(), columns.len()) {
            return Err(Error::shape(
                format!("{}x{}", ids.len(), columns.len()),
                format!("{:?}", values.dim()),
            ));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateUtterance(id.clone()));
            }
        }
        Ok(Self {
            ids,
            columns,
            values,
            index,
        })
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Rows for the given ids, in that order.
    pub fn select(&self, ids: &[String]) -> Result<Array2<f64>> {
        let idx = ids
            .iter()
            .map(|id| {
                self.row_of(id)
                    .ok_or_else(|| Error::InvalidArgument(format!("no row for utterance `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.values.select(ndarray::Axis(0), &idx))
    }

    /// Reads `utterance_id,c1,...,cd` with a header. Lines starting with `#`
    /// are comments.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
        let d = columns.len();
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != d + 1 {
                return Err(Error::InvalidArgument(format!("line {line}: expected {} fields, got {}", d + 1, rec.len())));
            }
            ids.push(rec[0].to_string());
            for cell in rec.iter().skip(1) {
                data.push(
                    cell.parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("line {line}: {e}")))?,
                );
            }
        }
        let n = ids.len();
        Self::new(ids, columns, Array2::from_shape_vec((n, d), data).expect("row-major table"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read(fs::File::open(path).map_err(|e| Error::io(path, e))?)
    }

    /// Writes the table; `comment` lines are emitted first, each prefixed by `#`.
    pub fn write<W: Write>(&self, mut writer: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(writer, "# {line}").map_err(|e| Error::io("<output>", e))?;
            }
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["utterance_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.ids.iter().zip(self.values.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }

    pub fn to_bytes(&self, comment: Option<&str>) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf, comment)?;
        Ok(buf)
    }
}

/// Writes through a temporary file in the same directory and renames it into
/// place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
