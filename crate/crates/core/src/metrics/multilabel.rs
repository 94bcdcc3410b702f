use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::classification::{binarize, BinarizedLabels};
use crate::cooccurrence::CoCountMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelMetrics {
    pub hamming: f64,
    pub ranking_loss: f64,
    pub coverage_error: f64,
    /// Rows with no relevant label, left out of ranking loss and coverage.
    pub excluded_rows: usize,
}

/// Hamming loss after 0.5-binarization, label ranking loss (ties between a
/// relevant and an irrelevant label count as mis-ordered) and 1-based
/// coverage error.
pub fn multilabel_metrics(truth: ArrayView2<u8>, yp: ArrayView2<f64>) -> Result<MultiLabelMetrics> {
    if truth.dim() != yp.dim() {
        return Err(Error::shape(format!("{:?}", truth.dim()), format!("{:?}", yp.dim())));
    }
    let (n, c) = truth.dim();
    let pred = binarize(yp, 0.5);
    let disagree = truth.iter().zip(pred.iter()).filter(|(a, b)| (**a != 0) != (**b != 0)).count();
    let hamming = if n * c == 0 { 0.0 } else { disagree as f64 / (n * c) as f64 };

    let mut ranking = 0.0;
    let mut coverage = 0.0;
    let mut used = 0usize;
    for (t, s) in truth.rows().into_iter().zip(yp.rows()) {
        let relevant: Vec<usize> = (0..c).filter(|&j| t[j] != 0).collect();
        if relevant.is_empty() {
            continue;
        }
        used += 1;
        let irrelevant: Vec<usize> = (0..c).filter(|&j| t[j] == 0).collect();
        if !irrelevant.is_empty() {
            let wrong = relevant
                .iter()
                .map(|&r| irrelevant.iter().filter(|&&k| s[k] >= s[r]).count())
                .sum::<usize>();
            ranking += wrong as f64 / (relevant.len() * irrelevant.len()) as f64;
        }
        let lowest = relevant.iter().map(|&r| s[r]).fold(f64::INFINITY, f64::min);
        coverage += s.iter().filter(|&&v| v >= lowest).count() as f64;
    }
    let excluded_rows = n - used;
    if excluded_rows > 0 {
        log::warn!("{excluded_rows} rows without relevant labels excluded from ranking loss and coverage");
    }
    let mean = |x: f64| if used == 0 { 0.0 } else { x / used as f64 };
    Ok(MultiLabelMetrics {
        hamming,
        ranking_loss: mean(ranking),
        coverage_error: mean(coverage),
        excluded_rows,
    })
}

/// Keeps the mapped source columns as-is (no renormalization) and binarizes
/// them at `1 / source_c`.
pub fn project_predictions(yp: ArrayView2<f64>, mapping: &[usize], source_c: usize) -> Result<(Array2<f64>, BinarizedLabels)> {
    if yp.ncols() != source_c {
        return Err(Error::shape(format!("{source_c} source columns"), yp.ncols()));
    }
    let mut seen = vec![false; source_c];
    for &m in mapping {
        if m >= source_c || std::mem::replace(&mut seen[m], true) {
            return Err(Error::InvalidArgument(format!("invalid or repeated source index {m}")));
        }
    }
    let projected = Array2::from_shape_fn((yp.nrows(), mapping.len()), |(i, k)| yp[[i, mapping[k]]]);
    let bin = binarize(projected.view(), 1.0 / source_c as f64);
    Ok((projected, bin))
}

/// Co-occurrence counts where each prediction row's 1-set plays the role of
/// an utterance's chosen classes.
pub fn predicted_cooccurrence(pred: ArrayView2<u8>, classes: Vec<String>) -> Result<CoCountMatrix> {
    if pred.ncols() != classes.len() {
        return Err(Error::shape(format!("{} columns", classes.len()), pred.ncols()));
    }
    let sets: Vec<Vec<usize>> = pred
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().filter(|(_, &v)| v != 0).map(|(j, _)| j).collect())
        .collect();
    Ok(CoCountMatrix::from_sets(classes, sets.iter().map(Vec::as_slice)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_predictions() {
        let t = array![[1, 0, 1], [0, 1, 0]];
        let p = array![[0.99, 0.01, 0.98], [0.02, 0.97, 0.03]];
        let m = multilabel_metrics(t.view(), p.view()).unwrap();
        assert_eq!(m.hamming, 0.0);
        assert_eq!(m.ranking_loss, 0.0);
        assert_eq!(m.coverage_error, 1.5);
    }

    #[test]
    fn last_ranked_label_needs_full_depth() {
        let mut t = Array2::<u8>::zeros((1, 8));
        t[[0, 7]] = 1;
        let p = Array2::from_shape_fn((1, 8), |(_, j)| 0.9 - 0.1 * j as f64);
        let m = multilabel_metrics(t.view(), p.view()).unwrap();
        assert_eq!(m.coverage_error, 8.0);
        assert_eq!(m.ranking_loss, 1.0);
    }

    #[test]
    fn empty_truth_rows_are_excluded() {
        let t = array![[0, 0], [1, 0]];
        let p = array![[0.9, 0.1], [0.8, 0.3]];
        let m = multilabel_metrics(t.view(), p.view()).unwrap();
        assert_eq!(m.excluded_rows, 1);
        assert_eq!(m.coverage_error, 1.0);
        assert_eq!(m.hamming, 0.25);
    }

    #[test]
    fn cross_corpus_example() {
        let yp = array![[0.2, 0.2, 0.1, 0.1, 0.2, 0.1, 0.0, 0.1]];
        let (proj, bin) = project_predictions(yp.view(), &[0, 1, 2, 7], 8).unwrap();
        assert_eq!(proj, array![[0.2, 0.2, 0.1, 0.1]]);
        assert_eq!(bin, array![[1, 1, 0, 0]]);
        let (same, _) = project_predictions(yp.view(), &(0..8).collect::<Vec<_>>(), 8).unwrap();
        assert_eq!(same, yp);
        let away = array![[0.0, 0.0, 0.5, 0.5]];
        let (z, zb) = project_predictions(away.view(), &[0, 1], 4).unwrap();
        assert_eq!(z, array![[0.0, 0.0]]);
        assert_eq!(zb, array![[0, 0]]);
        assert!(project_predictions(yp.view(), &[0, 0], 8).is_err());
        assert!(project_predictions(yp.view(), &[8], 8).is_err());
    }

    #[test]
    fn predicted_cooccurrence_cases() {
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let single = predicted_cooccurrence(array![[1, 0, 0], [0, 0, 1]].view(), names.clone()).unwrap();
        assert_eq!(single.values, array![[1, 0, 0], [0, 0, 0], [0, 0, 1]]);
        let pair = predicted_cooccurrence(array![[1, 1, 0]].view(), names).unwrap();
        assert_eq!(pair.values, array![[1, 1, 0], [1, 1, 0], [0, 0, 0]]);
    }
}
