//! Training and evaluation targets built from vote counts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, Rule};
use crate::corpus::{Corpus, VoteCount};
use crate::error::{Error, Result};

/// Value given to zero entries of a multi-hot vector.
pub const MULTI_HOT_FLOOR: f64 = 1e-6;

/// Pseudo-count used for rater-level soft labels.
pub const DEFAULT_ALPHA: f64 = 0.75;

/// Label-smoothing strength used for hard and distribution targets.
pub const DEFAULT_SMOOTHING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelKind {
    Hard,
    Fraction,
    AlphaSoft,
    MultiHot,
}

impl LabelKind {
    /// Whether vectors of this kind live on the probability simplex.
    pub fn is_simplex(self) -> bool {
        !matches!(self, LabelKind::MultiHot)
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelKind::Hard => "hard",
            LabelKind::Fraction => "fraction",
            LabelKind::AlphaSoft => "alpha-soft",
            LabelKind::MultiHot => "multi-hot",
        })
    }
}

impl FromStr for LabelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(LabelKind::Hard),
            "fraction" => Ok(LabelKind::Fraction),
            "alpha-soft" => Ok(LabelKind::AlphaSoft),
            "multi-hot" => Ok(LabelKind::MultiHot),
            _ => Err(Error::InvalidArgument(format!("unknown label kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVector {
    pub values: Vec<f64>,
    pub kind: LabelKind,
    /// Smoothing strength if the vector has been smoothed.
    pub smoothing: Option<f64>,
}

impl LabelVector {
    fn new(values: Vec<f64>, kind: LabelKind) -> Self {
        Self {
            values,
            kind,
            smoothing: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn require_votes(vc: &VoteCount) -> Result<()> {
    if vc.total_in_set == 0 {
        Err(Error::EmptyVotes)
    } else {
        Ok(())
    }
}

/// One-hot at the consensus class, or `None` when the rule drops the utterance.
pub fn hard_onehot(vc: &VoteCount, rule: Rule, seed: u64, key: &str) -> Result<Option<LabelVector>> {
    let outcome = aggregate(vc, rule, seed, key)?;
    Ok(outcome.class_index.map(|c| {
        let mut values = vec![0.0; vc.num_classes()];
        values[c] = 1.0;
        LabelVector::new(values, LabelKind::Hard)
    }))
}

pub fn fraction_distribution(vc: &VoteCount) -> Result<LabelVector> {
    require_votes(vc)?;
    let total = f64::from(vc.total_in_set);
    Ok(LabelVector::new(
        vc.counts.iter().map(|&c| f64::from(c) / total).collect(),
        LabelKind::Fraction,
    ))
}

/// Vote distribution with an additive pseudo-count per class:
/// `(alpha + n_i) / (alpha * C + N)`.
pub fn alpha_soft(vc: &VoteCount, alpha: f64) -> Result<LabelVector> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {alpha}")));
    }
    require_votes(vc)?;
    let denom = alpha * vc.num_classes() as f64 + f64::from(vc.total_in_set);
    Ok(LabelVector::new(
        vc.counts.iter().map(|&c| (alpha + f64::from(c)) / denom).collect(),
        LabelKind::AlphaSoft,
    ))
}

/// Uniform-mixture label smoothing `(1 - eps) * y + eps / C`.
pub fn smooth(v: &LabelVector, eps: f64) -> Result<LabelVector> {
    if !v.kind.is_simplex() {
        return Err(Error::InvalidArgument(
            "smoothing applies to simplex labels, not multi-hot".into(),
        ));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("smoothing must lie in [0, 1), got {eps}")));
    }
    let c = v.len() as f64;
    Ok(LabelVector {
        values: v.values.iter().map(|&y| (1.0 - eps) * y + eps / c).collect(),
        kind: v.kind,
        smoothing: Some(eps),
    })
}

/// 1 for every class with at least one vote, [`MULTI_HOT_FLOOR`] otherwise.
pub fn multi_hot(vc: &VoteCount) -> Result<LabelVector> {
    require_votes(vc)?;
    Ok(LabelVector::new(
        vc.counts
            .iter()
            .map(|&c| if c > 0 { 1.0 } else { MULTI_HOT_FLOOR })
            .collect(),
        LabelKind::MultiHot,
    ))
}

/// Sub-corpus holding only the given rater's ratings.
pub fn per_rater_view(corpus: &Corpus, rater_id: &str) -> Result<Corpus> {
    corpus.per_rater_view(rater_id)
}

/// Parameters for encoding a whole corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeConfig {
    pub kind: LabelKind,
    pub rule: Rule,
    pub alpha: f64,
    pub smoothing: Option<f64>,
    pub seed: u64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            kind: LabelKind::Fraction,
            rule: Rule::Ar,
            alpha: DEFAULT_ALPHA,
            smoothing: None,
            seed: 0,
        }
    }
}

/// Encodes every utterance. Utterances the rule drops (hard labels) or that
/// have no in-set votes are omitted.
pub fn encode_corpus(corpus: &Corpus, cfg: &EncodeConfig) -> Result<Vec<(String, LabelVector)>> {
    let mut out = Vec::with_capacity(corpus.len());
    for (u, vc) in corpus.utterances().iter().zip(corpus.vote_counts()) {
        if vc.total_in_set == 0 {
            continue;
        }
        let v = match cfg.kind {
            LabelKind::Hard => match hard_onehot(&vc, cfg.rule, cfg.seed, &u.id)? {
                Some(v) => v,
                None => continue,
            },
            LabelKind::Fraction => fraction_distribution(&vc)?,
            LabelKind::AlphaSoft => alpha_soft(&vc, cfg.alpha)?,
            LabelKind::MultiHot => multi_hot(&vc)?,
        };
        let v = match cfg.smoothing {
            Some(eps) => smooth(&v, eps)?,
            None => v,
        };
        out.push((u.id.clone(), v));
    }
    Ok(out)
}
