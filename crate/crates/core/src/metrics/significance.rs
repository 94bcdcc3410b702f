use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-tailed two-sample Student t-test with pooled variance.
///
/// With zero variance in both samples the test degenerates: equal means give
/// `p = 1`, different means `p = 0`.
pub fn two_sample_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    let (na, nb) = (a.len(), b.len());
    if na < 2 || nb < 2 {
        return Err(Error::InvalidArgument("t-test needs at least 2 values per sample".into()));
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let ss = |x: &[f64], m: f64| x.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    let df = (na + nb - 2) as f64;
    let pooled = (ss(a, ma) + ss(b, mb)) / df;
    let se = (pooled * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
    if se == 0.0 {
        let (t, p_value) = if ma == mb { (0.0, 1.0) } else { (f64::INFINITY.copysign(ma - mb), 0.0) };
        return Ok(TTest { t, df, p_value });
    }
    let t = (ma - mb) / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, df, p_value })
}

/// Seeded assignment of `n` items to `n_folds` folds of near-equal size.
pub fn fold_assignment(n: usize, n_folds: usize, seed: u64) -> Result<Vec<usize>> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {n_folds}")));
    }
    if n < n_folds {
        return Err(Error::InvalidArgument(format!("{n} items cannot fill {n_folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut fold = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        fold[item] = pos % n_folds;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub fold_means_a: Vec<f64>,
    pub fold_means_b: Vec<f64>,
    pub test: TTest,
}

impl FoldTTest {
    pub fn p_value(&self) -> f64 {
        self.test.p_value
    }

    pub fn significant(&self, level: f64) -> bool {
        self.test.p_value < level
    }
}

pub(crate) fn fold_means(values: &[f64], fold: &[usize], n_folds: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n_folds];
    let mut cnt = vec![0usize; n_folds];
    for (&v, &f) in values.iter().zip(fold) {
        sum[f] += v;
        cnt[f] += 1;
    }
    sum.iter().zip(cnt).map(|(s, c)| s / c as f64).collect()
}

/// Splits paired per-item metrics into seeded folds, averages each fold and
/// compares the fold means with a two-tailed t-test.
pub fn fold_split_ttest(a: &[f64], b: &[f64], n_folds: usize, seed: u64) -> Result<FoldTTest> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    let fold = fold_assignment(a.len(), n_folds, seed)?;
    let fa = fold_means(a, &fold, n_folds);
    let fb = fold_means(b, &fold, n_folds);
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(FoldTTest {
        mean_a: mean(&fa),
        mean_b: mean(&fb),
        test: two_sample_ttest(&fa, &fb)?,
        fold_means_a: fa,
        fold_means_b: fb,
    })
}

/// Splits `n` test items into seeded folds, evaluates `metric` for each
/// system on every fold's item indices and compares the per-fold scores.
/// Suited to non-decomposable metrics such as macro-F1.
pub fn fold_split_metric_ttest<A, B>(n: usize, n_folds: usize, seed: u64, mut metric_a: A, mut metric_b: B) -> Result<FoldTTest>
where
    A: FnMut(&[usize]) -> Result<f64>,
    B: FnMut(&[usize]) -> Result<f64>,
{
    let fold = fold_assignment(n, n_folds, seed)?;
    let mut members = vec![Vec::new(); n_folds];
    for (i, &f) in fold.iter().enumerate() {
        members[f].push(i);
    }
    let fa = members.iter().map(|m| metric_a(m)).collect::<Result<Vec<_>>>()?;
    let fb = members.iter().map(|m| metric_b(m)).collect::<Result<Vec<_>>>()?;
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(FoldTTest {
        mean_a: mean(&fa),
        mean_b: mean(&fb),
        test: two_sample_ttest(&fa, &fb)?,
        fold_means_a: fa,
        fold_means_b: fb,
    })
}
