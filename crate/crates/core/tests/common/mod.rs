//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the code under test except to
//! build inputs.
#![allow(dead_code)]

use emolabel::corpus::{Corpus, EmotionClassSet, Utterance};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OTHER: &str = "X";

pub fn class_names(c: usize) -> Vec<String> {
    (0..c).map(|j| format!("E{j}")).collect()
}

/// Builds a corpus from per-utterance vote lists; index `c` stands for an
/// out-of-set label.
pub fn corpus_from_votes(c: usize, votes: &[Vec<usize>]) -> Corpus {
    let names = class_names(c);
    let utts = votes
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Utterance::with_ratings(
                format!("u{i:03}"),
                v.iter()
                    .enumerate()
                    .map(|(r, &k)| (format!("r{r}"), if k < c { names[k].clone() } else { OTHER.to_string() })),
            )
        })
        .collect();
    Corpus::new("gen", EmotionClassSet::new(names.clone()).unwrap(), utts).unwrap()
}

/// Strategy over (class count, per-utterance vote lists). Vote value `c`
/// is out of set.
pub fn votes_strategy(max_c: usize, max_n: usize, max_votes: usize) -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (2..=max_c).prop_flat_map(move |c| {
        (
            Just(c),
            prop::collection::vec(prop::collection::vec(0..=c, 1..=max_votes), 1..=max_n),
        )
    })
}

pub fn random_votes(rng: &mut impl Rng, c: usize, n: usize, max_votes: usize, out_of_set: f64) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=max_votes);
            (0..k)
                .map(|_| if rng.random_bool(out_of_set) { c } else { rng.random_range(0..c) })
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// In-set counts and out-of-set total from raw votes.
pub fn counts_of(c: usize, votes: &[usize]) -> (Vec<u32>, usize) {
    let mut counts = vec![0u32; c];
    let mut other = 0;
    for &v in votes {
        if v < c {
            counts[v] += 1;
        } else {
            other += 1;
        }
    }
    (counts, other)
}

pub fn majority(counts: &[u32]) -> Option<usize> {
    let total: u32 = counts.iter().sum();
    (0..counts.len()).find(|&j| 2 * counts[j] > total)
}

pub fn plurality(counts: &[u32]) -> Option<usize> {
    let max = *counts.iter().max()?;
    if max == 0 {
        return None;
    }
    let top: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] == max).collect();
    (top.len() == 1).then(|| top[0])
}

/// Evaluates (alpha + n_i) / (alpha * C + N) term by term.
pub fn alpha_soft_by_hand(counts: &[u32], alpha: f64) -> Vec<f64> {
    let c = counts.len() as f64;
    let mut n = 0.0;
    for &k in counts {
        n += k as f64;
    }
    counts.iter().map(|&k| (alpha + k as f64) / (alpha * c + n)).collect()
}

/// Every count vector of length `c` whose entries sum to at most `max_total`.
pub fn all_count_vectors(c: usize, max_total: u32) -> Vec<Vec<u32>> {
    fn rec(c: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == c {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(c, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(c, max_total, &mut Vec::new(), &mut out);
    out
}

/// O(|utterances| * C^2) recount with set semantics.
pub fn brute_co_counts(c: usize, votes: &[Vec<usize>]) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; c]; c];
    for v in votes {
        for j in 0..c {
            for z in 0..c {
                if v.contains(&j) && v.contains(&z) {
                    m[j][z] += 1;
                }
            }
        }
    }
    m
}

/// sum_i sum_j sum_z P[j][z] * L[i][j], accumulated naively.
pub fn triple_sum(l: &Array2<f64>, p: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..l.nrows() {
        for j in 0..l.ncols() {
            for z in 0..l.ncols() {
                total += p[[j, z]] * l[[i, j]];
            }
        }
    }
    total
}

pub fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// (macro, micro, weighted) F1 by explicit counting.
pub fn f1_by_counting(truth: &Array2<u8>, pred: &Array2<u8>) -> (f64, f64, f64) {
    let (n, c) = truth.dim();
    let f = |tp: f64, fp: f64, fn_: f64| {
        let p = safe_div(tp, tp + fp);
        let r = safe_div(tp, tp + fn_);
        safe_div(2.0 * p * r, p + r)
    };
    let (mut stp, mut sfp, mut sfn) = (0.0, 0.0, 0.0);
    let (mut macro_sum, mut weighted_sum, mut support_sum) = (0.0, 0.0, 0.0);
    for j in 0..c {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (t, p) = (truth[[i, j]] == 1, pred[[i, j]] == 1);
            if t && p {
                tp += 1.0;
            }
            if !t && p {
                fp += 1.0;
            }
            if t && !p {
                fn_ += 1.0;
            }
        }
        stp += tp;
        sfp += fp;
        sfn += fn_;
        let fj = f(tp, fp, fn_);
        macro_sum += fj;
        weighted_sum += fj * (tp + fn_);
        support_sum += tp + fn_;
    }
    (safe_div(macro_sum, c as f64), f(stp, sfp, sfn), safe_div(weighted_sum, support_sum))
}

pub fn uar_uap_by_counting(truth: &[usize], pred: &[usize], c: usize) -> (f64, f64) {
    let mut recall = 0.0;
    let mut precision = 0.0;
    for j in 0..c {
        let support = truth.iter().filter(|&&t| t == j).count() as f64;
        let predicted = pred.iter().filter(|&&p| p == j).count() as f64;
        let hits = truth.iter().zip(pred).filter(|(&t, &p)| t == j && p == j).count() as f64;
        recall += safe_div(hits, support);
        precision += safe_div(hits, predicted);
    }
    (recall / c as f64, precision / c as f64)
}

/// Hamming loss, ranking loss and coverage error from their pairwise and
/// rank-depth definitions. Rows with no relevant label are skipped for the
/// ranking metrics.
pub fn multilabel_by_enumeration(truth: &Array2<u8>, scores: &Array2<f64>) -> (f64, f64, f64) {
    let (n, c) = truth.dim();
    let mut wrong_bits = 0.0;
    for i in 0..n {
        for j in 0..c {
            if (scores[[i, j]] > 0.5) != (truth[[i, j]] == 1) {
                wrong_bits += 1.0;
            }
        }
    }
    let (mut rank_sum, mut cov_sum, mut rows) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let rel: Vec<usize> = (0..c).filter(|&j| truth[[i, j]] == 1).collect();
        if rel.is_empty() {
            continue;
        }
        rows += 1.0;
        let irr: Vec<usize> = (0..c).filter(|&j| truth[[i, j]] == 0).collect();
        let mut bad = 0.0;
        for &r in &rel {
            for &k in &irr {
                if scores[[i, k]] >= scores[[i, r]] {
                    bad += 1.0;
                }
            }
        }
        if !irr.is_empty() {
            rank_sum += bad / (rel.len() * irr.len()) as f64;
        }
        // depth of the worst-ranked relevant label, counting ties against us
        let mut depth = 0.0f64;
        for &r in &rel {
            let d = (0..c).filter(|&k| scores[[i, k]] >= scores[[i, r]]).count() as f64;
            depth = depth.max(d);
        }
        cov_sum += depth;
    }
    (
        safe_div(wrong_bits, (n * c) as f64),
        safe_div(rank_sum, rows),
        safe_div(cov_sum, rows),
    )
}

/// Two Gaussian blobs in `d` dimensions, labels one-hot over 2 classes.
pub fn separable(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut r = rng(seed);
    let mut x = Array2::zeros((n, d));
    let mut y = Array2::zeros((n, 2));
    for i in 0..n {
        let k = i % 2;
        let centre = if k == 0 { 2.0 } else { -2.0 };
        for j in 0..d {
            let u1: f64 = r.random_range(1e-12..1.0);
            let u2: f64 = r.random();
            let g = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            x[[i, j]] = centre + 0.5 * g;
        }
        y[[i, k]] = 1.0;
    }
    (x, y)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}
