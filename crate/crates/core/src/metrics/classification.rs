use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::PROB_FLOOR;

/// N×C matrix of 0/1 entries.
pub type BinarizedLabels = Array2<u8>;

/// Entry is 1 iff the prediction strictly exceeds the threshold.
pub fn binarize(yp: ArrayView2<f64>, threshold: f64) -> BinarizedLabels {
    yp.mapv(|p| u8::from(p > threshold))
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassScores>,
}

/// Per-class precision/recall/F1 (0/0 taken as 0) with macro, micro and
/// support-weighted averages.
pub fn f1_scores(truth: ArrayView2<u8>, pred: ArrayView2<u8>) -> Result<F1Scores> {
    if truth.dim() != pred.dim() {
        return Err(Error::shape(format!("{:?}", truth.dim()), format!("{:?}", pred.dim())));
    }
    let c = truth.ncols();
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    let mut per_class = Vec::with_capacity(c);
    for j in 0..c {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&t, &p) in truth.column(j).iter().zip(pred.column(j)) {
            match (t != 0, p != 0) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let recall = ratio(tp as f64, (tp + fn_) as f64);
        per_class.push(ClassScores {
            precision,
            recall,
            f1: f1(precision, recall),
            support: tp + fn_,
        });
    }
    let macro_f1 = ratio(per_class.iter().map(|s| s.f1).sum(), c as f64);
    let micro_p = ratio(tp_all as f64, (tp_all + fp_all) as f64);
    let micro_r = ratio(tp_all as f64, (tp_all + fn_all) as f64);
    let support: usize = per_class.iter().map(|s| s.support).sum();
    let weighted_f1 = ratio(
        per_class.iter().map(|s| s.f1 * s.support as f64).sum(),
        support as f64,
    );
    Ok(F1Scores {
        macro_f1,
        micro_f1: f1(micro_p, micro_r),
        weighted_f1,
        per_class,
    })
}

/// Unweighted average recall and precision over `c` classes.
pub fn uar_uap(truth: &[usize], pred: &[usize], c: usize) -> Result<(f64, f64)> {
    if truth.len() != pred.len() {
        return Err(Error::shape(truth.len(), pred.len()));
    }
    if let Some(&bad) = truth.iter().chain(pred).find(|&&i| i >= c) {
        return Err(Error::InvalidArgument(format!("class index {bad} out of range for {c} classes")));
    }
    let mut tp = vec![0usize; c];
    let mut n_true = vec![0usize; c];
    let mut n_pred = vec![0usize; c];
    for (&t, &p) in truth.iter().zip(pred) {
        n_true[t] += 1;
        n_pred[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let uar = (0..c).map(|j| ratio(tp[j] as f64, n_true[j] as f64)).sum::<f64>() / c as f64;
    let uap = (0..c).map(|j| ratio(tp[j] as f64, n_pred[j] as f64)).sum::<f64>() / c as f64;
    Ok((uar, uap))
}

fn check_simplex(name: &str, m: &ArrayView2<f64>) -> Result<()> {
    for (i, row) in m.rows().into_iter().enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("{name} row {i} is not a distribution (sum {s})")));
        }
    }
    Ok(())
}

/// Mean over samples of `KL(truth || prediction)`.
pub fn kld_eval(truth: ArrayView2<f64>, yp: ArrayView2<f64>) -> Result<f64> {
    if truth.dim() != yp.dim() {
        return Err(Error::shape(format!("{:?}", truth.dim()), format!("{:?}", yp.dim())));
    }
    check_simplex("truth", &truth)?;
    check_simplex("prediction", &yp)?;
    let n = truth.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (t_row, p_row) in truth.rows().into_iter().zip(yp.rows()) {
        total += t_row
            .iter()
            .zip(p_row)
            .filter(|(&t, _)| t > 0.0)
            .map(|(&t, &p)| t * (t.ln() - p.max(PROB_FLOOR).ln()))
            .sum::<f64>();
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn binarize_examples() {
        let b = binarize(array![[0.2, 0.4, 0.4, 0.0], [0.45, 0.1, 0.0, 0.45], [0.25, 0.25, 0.25, 0.25]].view(), 0.25);
        assert_eq!(b, array![[0, 1, 1, 0], [1, 0, 0, 1], [0, 0, 0, 0]]);
    }

    #[test]
    fn f1_identity_and_complement() {
        let t = array![[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 0]];
        let s = f1_scores(t.view(), t.view()).unwrap();
        assert_eq!((s.macro_f1, s.micro_f1, s.weighted_f1), (1.0, 1.0, 1.0));
        let t2 = array![[1, 0], [0, 1]];
        let p2 = array![[0, 1], [1, 0]];
        assert_eq!(f1_scores(t2.view(), p2.view()).unwrap().macro_f1, 0.0);
        assert!(f1_scores(t2.view(), t.view()).is_err());
    }

    #[test]
    fn f1_hand_case() {
        // truth classes 0,1,2,0 ; pred 0,2,2,1
        let t = array![[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 0]];
        let p = array![[1, 0, 0], [0, 0, 1], [0, 0, 1], [0, 1, 0]];
        let s = f1_scores(t.view(), p.view()).unwrap();
        // class0 p=1 r=.5 f=2/3 ; class1 p=0 r=0 ; class2 p=.5 r=1 f=2/3
        assert!((s.macro_f1 - 4.0 / 9.0).abs() < 1e-12);
        assert!((s.micro_f1 - 0.5).abs() < 1e-12);
        assert!((s.weighted_f1 - (2.0 * 2.0 / 3.0 + 2.0 / 3.0) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn uar_cases() {
        assert_eq!(uar_uap(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), (1.0, 1.0));
        let (uar, uap) = uar_uap(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap();
        assert_eq!(uar, 0.5);
        assert_eq!(uap, 0.25);
        // truth 0,0,1,1,2 pred 0,1,1,1,0 -> recalls .5,1,0 ; precisions .5, 2/3, 0
        let (uar, uap) = uar_uap(&[0, 0, 1, 1, 2], &[0, 1, 1, 1, 0], 3).unwrap();
        assert!((uar - 0.5).abs() < 1e-15);
        assert!((uap - (0.5 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
        assert!(uar_uap(&[3], &[0], 3).is_err());
    }

    #[test]
    fn kld_cases() {
        let a = array![[0.9, 0.1]];
        let b = array![[0.5, 0.5]];
        assert_eq!(kld_eval(a.view(), a.view()).unwrap(), 0.0);
        let k = kld_eval(array![[1.0, 0.0]].view(), b.view()).unwrap();
        assert!((k - std::f64::consts::LN_2).abs() < 1e-15);
        let ab = kld_eval(a.view(), b.view()).unwrap();
        let ba = kld_eval(b.view(), a.view()).unwrap();
        assert!((ab - ba).abs() > 1e-3);
        assert!(kld_eval(array![[0.9, 0.3]].view(), b.view()).is_err());
    }
}
