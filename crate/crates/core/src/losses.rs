//! Elementwise loss matrices, the co-occurrence penalized loss, the combined
//! objective and hand-derived gradients with respect to pre-activation
//! scores.
//!
//! Batch reductions are means over samples (sums over classes). Every
//! reduction over samples uses pairwise summation so sharded evaluation
//! agrees with the sequential result to within rounding.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::cooccurrence::{row_sum_weights, PenaltyMatrix};
use crate::error::{Error, Result};

/// Probabilities are clamped to at least this before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Bce,
    Kld,
}

impl LossKind {
    /// Output head conventionally paired with the loss.
    pub fn default_head(self) -> Head {
        match self {
            LossKind::Ce | LossKind::Kld => Head::Softmax,
            LossKind::Bce => Head::Sigmoid,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Ce => "ce",
            LossKind::Bce => "bce",
            LossKind::Kld => "kld",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" => Ok(LossKind::Ce),
            "bce" => Ok(LossKind::Bce),
            "kld" => Ok(LossKind::Kld),
            _ => Err(Error::InvalidArgument(format!("unknown loss `{s}` (expected ce, bce or kld)"))),
        }
    }
}

/// Output activation: normalized exponential over classes, or an
/// independent sigmoid per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Softmax,
    Sigmoid,
}

fn check_head(kind: LossKind, head: Head) -> Result<()> {
    if kind.default_head() != head {
        return Err(Error::InvalidArgument(format!("loss {kind} requires the {:?} head", kind.default_head())));
    }
    Ok(())
}

fn check_same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    Ok(())
}

fn check_finite(name: &str, m: &ArrayView2<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// Sum with pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn softmax_rows(scores: ArrayView2<f64>) -> Array2<f64> {
    let mut out = scores.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|s| (s - max).exp());
        let z: f64 = row.sum();
        row.mapv_inplace(|e| e / z);
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(scores: ArrayView2<f64>, head: Head) -> Array2<f64> {
    match head {
        Head::Softmax => softmax_rows(scores),
        Head::Sigmoid => scores.mapv(sigmoid),
    }
}

fn ln_floor(x: f64) -> f64 {
    x.max(PROB_FLOOR).ln()
}

fn term(kind: LossKind, t: f64, p: f64) -> f64 {
    match kind {
        LossKind::Ce => {
            if t == 0.0 {
                0.0
            } else {
                -t * ln_floor(p)
            }
        }
        LossKind::Bce => {
            let pos = if t == 0.0 { 0.0 } else { t * ln_floor(p) };
            let neg = if t == 1.0 { 0.0 } else { (1.0 - t) * ln_floor(1.0 - p) };
            -(pos + neg)
        }
        LossKind::Kld => {
            if t == 0.0 {
                0.0
            } else {
                t * (t.ln() - ln_floor(p))
            }
        }
    }
}

/// Per-sample, per-class loss terms.
pub fn elementwise_loss(yt: ArrayView2<f64>, yp: ArrayView2<f64>, kind: LossKind) -> Result<Array2<f64>> {
    check_same_shape(&yt, &yp)?;
    check_finite("targets", &yt)?;
    check_finite("predictions", &yp)?;
    Ok(Zip::from(&yt).and(&yp).map_collect(|&t, &p| term(kind, t, p)))
}

/// Triple sum `sum_i sum_j sum_z P[j][z] * L[i][j]`.
pub fn penalized_loss(l: ArrayView2<f64>, p: &PenaltyMatrix) -> Result<f64> {
    let c = p.num_classes();
    if l.ncols() != c {
        return Err(Error::shape(format!("{c} loss columns"), l.ncols()));
    }
    let per_sample: Vec<f64> = l
        .rows()
        .into_iter()
        .map(|row| {
            let mut s = 0.0;
            for j in 0..c {
                for z in 0..c {
                    s += p.values[[j, z]] * row[j];
                }
            }
            s
        })
        .collect();
    Ok(pairwise_sum(&per_sample))
}

/// `beta * base + alpha * pen`.
pub fn total_loss(base: f64, pen: f64, alpha: f64, beta: f64) -> f64 {
    beta * base + alpha * pen
}

/// Effective weight on each class's loss term: `beta + alpha * rowsum(P)`.
pub fn class_weights(p: Option<&PenaltyMatrix>, alpha: f64, beta: f64, num_classes: usize) -> Vec<f64> {
    let rs = p.map(row_sum_weights).unwrap_or_else(|| vec![0.0; num_classes]);
    rs.into_iter().map(|r| beta + alpha * r).collect()
}

/// Objective configuration shared by the trainer and the gradient oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub kind: LossKind,
    pub head: Head,
    pub alpha: f64,
    pub beta: f64,
    pub penalty: Option<PenaltyMatrix>,
}

/// Loss values of one evaluation, already reduced by the mean over samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub base: f64,
    pub penalty: f64,
    pub total: f64,
}

impl Objective {
    pub fn new(kind: LossKind, alpha: f64, beta: f64, penalty: Option<PenaltyMatrix>) -> Self {
        Self {
            kind,
            head: kind.default_head(),
            alpha,
            beta,
            penalty,
        }
    }

    fn validate(&self, c: usize) -> Result<()> {
        check_head(self.kind, self.head)?;
        if let Some(p) = &self.penalty {
            if p.num_classes() != c {
                return Err(Error::shape(format!("{c}x{c} penalty"), p.num_classes()));
            }
        }
        Ok(())
    }

    /// Loss from predictions (after activation).
    pub fn value_from_predictions(&self, yt: ArrayView2<f64>, yp: ArrayView2<f64>) -> Result<LossValue> {
        self.validate(yt.ncols())?;
        let l = elementwise_loss(yt, yp, self.kind)?;
        let n = l.nrows().max(1) as f64;
        let row_sums: Vec<f64> = l.rows().into_iter().map(|r| r.sum()).collect();
        let base = pairwise_sum(&row_sums) / n;
        let pen = match &self.penalty {
            Some(p) => penalized_loss(l.view(), p)? / n,
            None => 0.0,
        };
        Ok(LossValue {
            base,
            penalty: pen,
            total: total_loss(base, pen, self.alpha, self.beta),
        })
    }

    pub fn value(&self, yt: ArrayView2<f64>, scores: ArrayView2<f64>) -> Result<LossValue> {
        check_same_shape(&yt, &scores)?;
        self.value_from_predictions(yt, activate(scores, self.head).view())
    }

    pub fn weights(&self, c: usize) -> Vec<f64> {
        class_weights(self.penalty.as_ref(), self.alpha, self.beta, c)
    }

    /// Gradient of the mean total loss with respect to the scores.
    pub fn gradient(&self, yt: ArrayView2<f64>, scores: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_same_shape(&yt, &scores)?;
        check_finite("scores", &scores)?;
        self.validate(yt.ncols())?;
        let yp = activate(scores, self.head);
        Ok(self.gradient_from_predictions(yt, yp.view()))
    }

    /// Same as [`Objective::gradient`] when predictions are already computed.
    pub fn gradient_from_predictions(&self, yt: ArrayView2<f64>, yp: ArrayView2<f64>) -> Array2<f64> {
        let (n, c) = yt.dim();
        let w = self.weights(c);
        let inv_n = 1.0 / n.max(1) as f64;
        let mut g = Array2::zeros((n, c));
        match self.head {
            Head::Softmax => {
                for i in 0..n {
                    let wt: f64 = (0..c).map(|j| w[j] * yt[[i, j]]).sum();
                    for k in 0..c {
                        g[[i, k]] = (yp[[i, k]] * wt - w[k] * yt[[i, k]]) * inv_n;
                    }
                }
            }
            Head::Sigmoid => {
                for i in 0..n {
                    for k in 0..c {
                        g[[i, k]] = w[k] * (yp[[i, k]] - yt[[i, k]]) * inv_n;
                    }
                }
            }
        }
        g
    }
}

/// Free-function form of [`Objective::gradient`].
pub fn loss_gradient(
    yt: ArrayView2<f64>,
    scores: ArrayView2<f64>,
    kind: LossKind,
    head: Head,
    p: Option<&PenaltyMatrix>,
    alpha: f64,
    beta: f64,
) -> Result<Array2<f64>> {
    let obj = Objective {
        kind,
        head,
        alpha,
        beta,
        penalty: p.cloned(),
    };
    obj.gradient(yt, scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_ce_is_zero() {
        let l = elementwise_loss(array![[1.0, 0.0]].view(), array![[1.0, 0.0]].view(), LossKind::Ce).unwrap();
        assert_eq!(l, array![[0.0, 0.0]]);
    }

    #[test]
    fn identical_kld_is_zero() {
        let d = array![[0.4, 0.6]];
        let l = elementwise_loss(d.view(), d.view(), LossKind::Kld).unwrap();
        assert_eq!(l, array![[0.0, 0.0]]);
    }

    #[test]
    fn bce_hand_value() {
        let l = elementwise_loss(array![[1.0, 1e-6]].view(), array![[0.5, 0.5]].view(), LossKind::Bce).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((l[[0, 0]] - ln2).abs() < 1e-15);
        // -(1e-6 ln .5 + (1 - 1e-6) ln .5) = ln 2
        assert!((l[[0, 1]] - ln2).abs() < 1e-12);
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let a = array![[0.5, 0.5]];
        let b = array![[0.5, 0.5, 0.0]];
        assert!(elementwise_loss(a.view(), b.view(), LossKind::Ce).is_err());
        let nan = array![[f64::NAN, 0.5]];
        assert!(matches!(elementwise_loss(nan.view(), a.view(), LossKind::Ce), Err(Error::NonFinite(_))));
    }

    #[test]
    fn penalized_loss_cases() {
        let names: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        let l = array![[0.3, 1.2, 0.1], [2.0, 0.0, 0.7]];
        assert_eq!(penalized_loss(l.view(), &PenaltyMatrix::zeros(names.clone())).unwrap(), 0.0);
        // every row sums to 0.9
        let p = PenaltyMatrix::from_array(names, array![[0.0, 0.4, 0.5], [0.3, 0.0, 0.6], [0.9, 0.0, 0.0]]).unwrap();
        let expect = 0.9 * l.sum();
        assert!((penalized_loss(l.view(), &p).unwrap() - expect).abs() < 1e-12);
        let wrong = array![[1.0, 2.0]];
        assert!(penalized_loss(wrong.view(), &p).is_err());
    }

    #[test]
    fn total_loss_cases() {
        assert_eq!(total_loss(1.7, 9.0, 0.0, 1.0), 1.7);
        assert_eq!(total_loss(1.7, 9.0, 1.0, 0.0), 9.0);
        assert_eq!(total_loss(2.0, 0.5, 0.5, 1.0), 2.25);
    }

    #[test]
    fn perfect_ce_gradient_vanishes() {
        let yt = array![[1.0, 0.0, 0.0]];
        let scores = array![[40.0, 0.0, 0.0]];
        let g = loss_gradient(yt.view(), scores.view(), LossKind::Ce, Head::Softmax, None, 0.0, 1.0).unwrap();
        assert!(g.iter().all(|v| v.abs() <= 1e-9), "{g}");
    }

    #[test]
    fn mismatched_head_is_rejected() {
        let yt = array![[1.0, 0.0]];
        assert!(loss_gradient(yt.view(), yt.view(), LossKind::Bce, Head::Softmax, None, 0.0, 1.0).is_err());
        assert!(loss_gradient(yt.view(), yt.view(), LossKind::Ce, Head::Sigmoid, None, 0.0, 1.0).is_err());
    }

    #[test]
    fn baseline_configuration_matches_unpenalized_bitwise() {
        let names: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        let p = PenaltyMatrix::from_array(names, array![[0.0, 0.4, 0.5], [0.3, 0.0, 0.6], [0.9, 0.1, 0.0]]).unwrap();
        let yt = array![[0.2, 0.5, 0.3], [1.0, 0.0, 0.0]];
        let s = array![[0.1, -1.0, 2.0], [0.5, 0.2, -0.3]];
        for kind in [LossKind::Ce, LossKind::Kld] {
            let a = loss_gradient(yt.view(), s.view(), kind, Head::Softmax, Some(&p), 0.0, 1.0).unwrap();
            let b = loss_gradient(yt.view(), s.view(), kind, Head::Softmax, None, 0.0, 1.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert!((pairwise_sum(&xs) - xs.iter().sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(array![[1000.0, 0.0, -3.0], [0.1, 0.2, 0.3]].view());
        for r in p.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        assert!((sigmoid(-800.0)).is_finite() && sigmoid(0.0) == 0.5);
    }
}
