//! Consensus rules over per-utterance vote counts.
//!
//! * Majority (MR): a class needs strictly more than half of the in-set votes.
//! * Plurality (PR): a class needs strictly more votes than every other class.
//! * All-inclusive (AR): every utterance is kept; its hard label is drawn
//!   uniformly from the top-voted classes.
//!
//! Besides the per-utterance outcomes this module accounts for how much data
//! and how many individual ratings each rule throws away.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{vote_counts, Corpus, VoteCount};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Rule {
    Mr,
    Pr,
    Ar,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::Mr, Rule::Pr, Rule::Ar];
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Mr => "MR",
            Rule::Pr => "PR",
            Rule::Ar => "AR",
        })
    }
}

impl FromStr for Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mr" => Ok(Rule::Mr),
            "pr" => Ok(Rule::Pr),
            "ar" => Ok(Rule::Ar),
            _ => Err(Error::InvalidArgument(format!("unknown rule `{s}` (expected mr, pr or ar)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusOutcome {
    pub rule: Rule,
    pub class_index: Option<usize>,
    /// Every class holding the maximum vote count.
    pub tie_set: Vec<usize>,
    pub kept: bool,
}

fn check_votes(vc: &VoteCount) -> Result<()> {
    if vc.total_in_set == 0 {
        return Err(Error::EmptyVotes);
    }
    Ok(())
}

pub fn aggregate_mr(vc: &VoteCount) -> Result<ConsensusOutcome> {
    check_votes(vc)?;
    let tie_set = vc.argmax_set();
    // strict: 2 * max > total, so an exact half never qualifies
    let class_index = (2 * vc.max_count() > vc.total_in_set).then(|| tie_set[0]);
    Ok(ConsensusOutcome {
        rule: Rule::Mr,
        kept: class_index.is_some(),
        class_index,
        tie_set,
    })
}

pub fn aggregate_pr(vc: &VoteCount) -> Result<ConsensusOutcome> {
    check_votes(vc)?;
    let tie_set = vc.argmax_set();
    let class_index = (tie_set.len() == 1).then(|| tie_set[0]);
    Ok(ConsensusOutcome {
        rule: Rule::Pr,
        kept: class_index.is_some(),
        class_index,
        tie_set,
    })
}

/// All-inclusive hard decision. Ties are broken by a generator keyed on
/// `(seed, key)`, where `key` is normally the utterance id.
pub fn aggregate_ar_hard(vc: &VoteCount, seed: u64, key: &str) -> Result<ConsensusOutcome> {
    check_votes(vc)?;
    let tie_set = vc.argmax_set();
    let pick = if tie_set.len() == 1 {
        tie_set[0]
    } else {
        tie_set[rng::keyed(seed, key).random_range(0..tie_set.len())]
    };
    Ok(ConsensusOutcome {
        rule: Rule::Ar,
        class_index: Some(pick),
        tie_set,
        kept: true,
    })
}

pub fn aggregate(vc: &VoteCount, rule: Rule, seed: u64, key: &str) -> Result<ConsensusOutcome> {
    match rule {
        Rule::Mr => aggregate_mr(vc),
        Rule::Pr => aggregate_pr(vc),
        Rule::Ar => aggregate_ar_hard(vc, seed, key),
    }
}

/// Outcome for an utterance inside a corpus. Utterances with no in-set votes
/// are dropped by MR and PR and kept (without a class) by AR.
pub fn utterance_outcome(vc: &VoteCount, rule: Rule, seed: u64, key: &str) -> ConsensusOutcome {
    match aggregate(vc, rule, seed, key) {
        Ok(o) => o,
        Err(_) => ConsensusOutcome {
            rule,
            class_index: None,
            tie_set: Vec::new(),
            kept: rule == Rule::Ar,
        },
    }
}

pub type IdSet = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsensusSplit {
    pub kept: IdSet,
    pub dropped: IdSet,
}

pub fn consensus_split(corpus: &Corpus, rule: Rule) -> ConsensusSplit {
    let mut split = ConsensusSplit::default();
    for u in corpus.utterances() {
        // the tie-break seed does not influence whether an utterance is kept
        let outcome = utterance_outcome(&vote_counts(u, &corpus.class_set), rule, 0, &u.id);
        if outcome.kept {
            split.kept.insert(u.id.clone());
        } else {
            split.dropped.insert(u.id.clone());
        }
    }
    split
}

/// Set difference `a \ b`, e.g. PR-kept minus MR-kept.
pub fn donut(a: &IdSet, b: &IdSet) -> IdSet {
    a.difference(b).cloned().collect()
}

/// Evaluation subset: the kept set of one rule, or a donut between two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestSet {
    Mr,
    Pr,
    Ar,
    /// PR-kept minus MR-kept.
    PrMr,
    /// AR-kept minus PR-kept: the non-consensus utterances.
    ArPr,
}

impl TestSet {
    pub const ALL: [TestSet; 5] = [TestSet::Mr, TestSet::Pr, TestSet::Ar, TestSet::PrMr, TestSet::ArPr];

    pub fn select(self, corpus: &Corpus) -> IdSet {
        let kept = |r| consensus_split(corpus, r).kept;
        match self {
            TestSet::Mr => kept(Rule::Mr),
            TestSet::Pr => kept(Rule::Pr),
            TestSet::Ar => kept(Rule::Ar),
            TestSet::PrMr => donut(&kept(Rule::Pr), &kept(Rule::Mr)),
            TestSet::ArPr => donut(&kept(Rule::Ar), &kept(Rule::Pr)),
        }
    }
}

impl fmt::Display for TestSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestSet::Mr => "MR",
            TestSet::Pr => "PR",
            TestSet::Ar => "AR",
            TestSet::PrMr => "PR-MR",
            TestSet::ArPr => "AR-PR",
        })
    }
}

impl FromStr for TestSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mr" => Ok(TestSet::Mr),
            "pr" => Ok(TestSet::Pr),
            "ar" => Ok(TestSet::Ar),
            "pr-mr" => Ok(TestSet::PrMr),
            "ar-pr" => Ok(TestSet::ArPr),
            _ => Err(Error::InvalidArgument(format!(
                "unknown test set `{s}` (expected mr, pr, ar, pr-mr or ar-pr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rule: Rule,
    pub data_loss: f64,
    pub rating_loss: f64,
    pub kept_utterances: usize,
    pub kept_ratings: usize,
    pub total_utterances: usize,
    pub total_ratings: usize,
}

/// Data loss is the share of dropped utterances. Rating loss counts every
/// rating of a dropped utterance, in-set ratings of a kept utterance that
/// disagree with its consensus class (MR and PR only), and out-of-set ratings
/// under any rule.
pub fn loss_report(corpus: &Corpus, rule: Rule) -> LossReport {
    let mut kept_utts = 0usize;
    let mut lost_ratings = 0usize;
    for u in corpus.utterances() {
        let vc = vote_counts(u, &corpus.class_set);
        let outcome = utterance_outcome(&vc, rule, 0, &u.id);
        let n = u.ratings.len();
        if !outcome.kept {
            lost_ratings += n;
            continue;
        }
        kept_utts += 1;
        let out_of_set = (vc.total_all - vc.total_in_set) as usize;
        let disagreeing = match (rule, outcome.class_index) {
            (Rule::Ar, _) | (_, None) => 0,
            (_, Some(c)) => (vc.total_in_set - vc.counts[c]) as usize,
        };
        lost_ratings += out_of_set + disagreeing;
    }
    let total_utts = corpus.len();
    let total_ratings = corpus.total_ratings();
    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    LossReport {
        rule,
        data_loss: frac(total_utts - kept_utts, total_utts),
        rating_loss: frac(lost_ratings, total_ratings),
        kept_utterances: kept_utts,
        kept_ratings: total_ratings - lost_ratings,
        total_utterances: total_utts,
        total_ratings,
    }
}

/// Aligned text table with data and rating loss per rule.
pub fn loss_table(corpus_name: &str, reports: &[LossReport]) -> String {
    let name_w = corpus_name.len().max("Corpus".len());
    let mut head = format!("{:<name_w$}", "Corpus");
    let mut sub = format!("{:<name_w$}", "");
    let mut row = format!("{corpus_name:<name_w$}");
    for r in reports {
        head.push_str(&format!(" | {:^17}", r.rule.to_string()));
        sub.push_str(&format!(" | {:>8} {:>8}", "Data", "Rating"));
        row.push_str(&format!(
            " | {:>7.2}% {:>7.2}%",
            100.0 * r.data_loss,
            100.0 * r.rating_loss
        ));
    }
    format!("{head}\n{sub}\n{row}\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EmotionClassSet, Utterance};

    fn vc(c: &[u32]) -> VoteCount {
        VoteCount::from_counts(c.to_vec())
    }

    fn trio() -> Corpus {
        Corpus::new(
            "trio",
            EmotionClassSet::parse("N,H,A,S").unwrap(),
            vec![
                Utterance::from_votes("C1", ["N", "N", "A", "A", "S"]),
                Utterance::from_votes("C2", ["N", "N", "H", "A", "S"]),
                Utterance::from_votes("C3", ["N", "N", "N", "A", "S"]),
            ],
        )
        .unwrap()
    }

    fn ids(v: &[&str]) -> IdSet {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn test_sets_and_donuts() {
        let c = trio();
        assert_eq!(TestSet::Mr.select(&c), ids(&["C3"]));
        assert_eq!(TestSet::PrMr.select(&c), ids(&["C2"]));
        assert_eq!(TestSet::ArPr.select(&c), ids(&["C1"]));
        for t in TestSet::ALL {
            assert_eq!(t.to_string().to_lowercase().parse::<TestSet>().unwrap(), t);
        }
    }

    #[test]
    fn majority_examples() {
        assert_eq!(aggregate_mr(&vc(&[3, 0, 1, 1])).unwrap().class_index, Some(0));
        let tie = aggregate_mr(&vc(&[2, 0, 2, 1])).unwrap();
        assert!(!tie.kept && tie.class_index.is_none());
        assert_eq!(aggregate_mr(&vc(&[0, 5, 0, 0])).unwrap().class_index, Some(1));
        // exact half is not a majority
        assert!(!aggregate_mr(&vc(&[2, 2])).unwrap().kept);
        assert!(!aggregate_mr(&vc(&[2, 1, 1, 0])).unwrap().kept);
        assert!(matches!(aggregate_mr(&vc(&[0, 0])), Err(Error::EmptyVotes)));
    }

    #[test]
    fn plurality_examples() {
        assert_eq!(aggregate_pr(&vc(&[2, 1, 1, 1])).unwrap().class_index, Some(0));
        let tie = aggregate_pr(&vc(&[2, 0, 2, 1])).unwrap();
        assert!(!tie.kept);
        assert_eq!(tie.tie_set, vec![0, 2]);
        assert_eq!(aggregate_pr(&vc(&[0, 5, 0, 0])).unwrap().class_index, Some(1));
        assert!(aggregate_pr(&vc(&[0, 0, 0])).is_err());
    }

    #[test]
    fn all_inclusive_picks_from_tie_set() {
        for seed in 0..200 {
            let o = aggregate_ar_hard(&vc(&[2, 0, 2, 1]), seed, "C1").unwrap();
            assert!(o.kept);
            assert!(matches!(o.class_index, Some(0) | Some(2)));
            assert_eq!(o, aggregate_ar_hard(&vc(&[2, 0, 2, 1]), seed, "C1").unwrap());
            assert_eq!(aggregate_ar_hard(&vc(&[3, 0, 1, 1]), seed, "x").unwrap().class_index, Some(0));
        }
    }

    #[test]
    fn all_inclusive_uniform_over_seeds() {
        let mut hits = [0usize; 4];
        let n = 10_000;
        for seed in 0..n {
            let o = aggregate_ar_hard(&vc(&[1, 1, 1, 1]), seed, "u").unwrap();
            hits[o.class_index.unwrap()] += 1;
        }
        for h in hits {
            let f = h as f64 / n as f64;
            assert!((f - 0.25).abs() <= 0.02, "frequency {f}");
        }
    }

    #[test]
    fn trio_splits() {
        let c = trio();
        let mr = consensus_split(&c, Rule::Mr);
        assert_eq!(mr.kept, ids(&["C3"]));
        assert_eq!(mr.dropped, ids(&["C1", "C2"]));
        let pr = consensus_split(&c, Rule::Pr);
        assert_eq!(pr.kept, ids(&["C2", "C3"]));
        assert_eq!(pr.dropped, ids(&["C1"]));
        assert!(consensus_split(&c, Rule::Ar).dropped.is_empty());
        assert_eq!(donut(&pr.kept, &mr.kept), ids(&["C2"]));
        assert!(donut(&pr.kept, &pr.kept).is_empty());
        assert_eq!(donut(&pr.kept, &IdSet::new()), pr.kept);
    }

    #[test]
    fn trio_losses() {
        let c = trio();
        let mr = loss_report(&c, Rule::Mr);
        assert!((mr.data_loss - 2.0 / 3.0).abs() < 1e-15);
        assert!((mr.rating_loss - 0.8).abs() < 1e-15);
        assert_eq!(mr.kept_ratings, 3);
        let ar = loss_report(&c, Rule::Ar);
        assert_eq!(ar.data_loss, 0.0);
        assert_eq!(ar.rating_loss, 0.0);
    }

    #[test]
    fn out_of_set_votes_cost_ratings_under_all_inclusive() {
        let c = Corpus::new(
            "o",
            EmotionClassSet::parse("N,A").unwrap(),
            vec![
                Utterance::from_votes("u1", ["N", "other", "N"]),
                Utterance::from_votes("u2", ["other", "other"]),
            ],
        )
        .unwrap();
        let ar = loss_report(&c, Rule::Ar);
        assert_eq!(ar.data_loss, 0.0);
        assert!((ar.rating_loss - 3.0 / 5.0).abs() < 1e-15);
        let mr = loss_report(&c, Rule::Mr);
        assert!((mr.data_loss - 0.5).abs() < 1e-15);
    }

    #[test]
    fn table_has_every_rule() {
        let c = trio();
        let reports: Vec<_> = Rule::ALL.iter().map(|&r| loss_report(&c, r)).collect();
        let t = loss_table("trio", &reports);
        assert!(t.contains("MR") && t.contains("PR") && t.contains("AR"));
        assert!(t.contains("66.67%") && t.contains("80.00%") && t.contains("0.00%"));
    }
}
