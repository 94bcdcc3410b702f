use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::classification::{binarize, f1_scores, kld_eval, uar_uap};
use super::multilabel::multilabel_metrics;
use super::significance::FoldTTest;
use crate::error::Result;

/// Metric bundle for one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_set: String,
    pub threshold: f64,
    pub label_kind: String,
    pub n_samples: usize,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    pub uar: f64,
    pub uap: f64,
    /// Only when predictions and targets are both distributions.
    pub kld: Option<f64>,
    pub hamming: f64,
    pub ranking_loss: f64,
    pub coverage_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<FoldTTest>,
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

impl EvalReport {
    /// Scores predictions against target vectors. Targets and predictions are
    /// binarized at `threshold` for the F1 family; UAR/UAP use the argmax of
    /// each row; KLD is reported when both sides are distributions.
    pub fn compute(test_set: &str, label_kind: &str, truth: ArrayView2<f64>, yp: ArrayView2<f64>, threshold: f64) -> Result<Self> {
        let n = truth.nrows();
        let tb = binarize(truth, threshold);
        let pb = binarize(yp, threshold);
        let f1 = f1_scores(tb.view(), pb.view())?;
        let t_idx: Vec<usize> = truth.rows().into_iter().map(argmax).collect();
        let p_idx: Vec<usize> = yp.rows().into_iter().map(argmax).collect();
        let (uar, uap) = if n == 0 { (0.0, 0.0) } else { uar_uap(&t_idx, &p_idx, truth.ncols())? };
        let ml = multilabel_metrics(tb.view(), yp)?;
        Ok(Self {
            test_set: test_set.to_string(),
            threshold,
            label_kind: label_kind.to_string(),
            n_samples: n,
            macro_f1: f1.macro_f1,
            micro_f1: f1.micro_f1,
            weighted_f1: f1.weighted_f1,
            uar,
            uap,
            kld: kld_eval(truth, yp).ok(),
            hamming: ml.hamming,
            ranking_loss: ml.ranking_loss,
            coverage_error: ml.coverage_error,
            significance: None,
        })
    }
}

/// Aligned table, one row per test set.
pub fn eval_table(reports: &[EvalReport]) -> String {
    let w = reports.iter().map(|r| r.test_set.len()).max().unwrap_or(0).max(8);
    let mut out = format!(
        "{:<w$} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "Test set", "N", "MaF1", "MiF1", "WF1", "UAR", "UAP", "KLD", "Hamming", "Rank", "Cover"
    );
    for r in reports {
        let kld = r.kld.map_or_else(|| "-".to_string(), |k| format!("{k:.4}"));
        out.push_str(&format!(
            "{:<w$} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8} {:>8.4} {:>8.4} {:>8.4}\n",
            r.test_set, r.n_samples, r.macro_f1, r.micro_f1, r.weighted_f1, r.uar, r.uap, kld, r.hamming, r.ranking_loss, r.coverage_error
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn perfect_distribution_predictions() {
        let t = array![[0.4, 0.0, 0.4, 0.2], [0.0, 1.0, 0.0, 0.0]];
        let r = EvalReport::compute("AR", "fraction", t.view(), t.view(), 0.25).unwrap();
        // the last class has neither support nor predictions and scores 0
        assert_eq!(r.macro_f1, 0.75);
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r.kld, Some(0.0));
        assert_eq!(r.n_samples, 2);
        assert!(eval_table(&[r]).contains("AR"));
    }

    #[test]
    fn empty_test_set_is_reported() {
        let e = Array2::<f64>::zeros((0, 4));
        let r = EvalReport::compute("AR-PR", "fraction", e.view(), e.view(), 0.25).unwrap();
        assert_eq!(r.n_samples, 0);
        assert_eq!(r.macro_f1, 0.0);
    }
}
