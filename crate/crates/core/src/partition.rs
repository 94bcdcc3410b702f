//! Speaker-independent partition manifests for the supported emotion corpora.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng;

pub const SUPPORTED_DATASETS: [&str; 4] = ["IEMOCAP", "IMPROV", "CREMA-D", "IEMOCAP-CH3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Session(String),
    /// A random share of the fold's training utterances, carved out of train.
    RandomFractionOfTrain { fraction: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<Selector>,
    pub dev: Vec<Selector>,
    pub test: Vec<Selector>,
}

/// Speaker membership of a session, for corpora whose sessions are defined by
/// speaker id ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpeakers {
    pub session: String,
    pub male: u32,
    pub female: u32,
    pub speakers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub dataset_id: String,
    pub folds: Vec<Fold>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sessions: Vec<SessionSpeakers>,
}

/// Utterance ids of one resolved fold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FoldSplit {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

fn sessions(ids: &[u32]) -> Vec<Selector> {
    ids.iter().map(|s| Selector::Session(s.to_string())).collect()
}

fn table(rows: &[(&[u32], &[u32], &[u32])]) -> Vec<Fold> {
    rows.iter()
        .map(|(tr, dv, te)| Fold {
            train: sessions(tr),
            dev: sessions(dv),
            test: sessions(te),
        })
        .collect()
}

/// Five-fold session rotation shared by IEMOCAP and CREMA-D.
fn five_session_rotation() -> Vec<Fold> {
    table(&[
        (&[1, 2, 3], &[4], &[5]),
        (&[2, 3, 4], &[5], &[1]),
        (&[3, 4, 5], &[1], &[2]),
        (&[1, 4, 5], &[2], &[3]),
        // the published row reads train {1,2,4}, test {4}; train is the
        // complement of dev and test as in every other fold
        (&[1, 2, 5], &[3], &[4]),
    ])
}

fn crema_d_sessions() -> Vec<SessionSpeakers> {
    [
        (1, 7, 11, 1037..=1054),
        (2, 12, 6, 1001..=1018),
        (3, 13, 6, 1073..=1091),
        (4, 9, 9, 1055..=1072),
        (5, 15, 3, 1019..=1036),
    ]
    .into_iter()
    .map(|(s, m, f, range)| SessionSpeakers {
        session: s.to_string(),
        male: m,
        female: f,
        speakers: range.map(|id: u32| id.to_string()).collect(),
    })
    .collect()
}

/// Built-in fold tables. `seed` only affects IEMOCAP-CH3, whose dev set is a
/// random 10% of each fold's training data.
pub fn standard_partition(dataset_id: &str, seed: u64) -> Result<PartitionManifest> {
    let (folds, sessions) = match dataset_id {
        "IEMOCAP" => (five_session_rotation(), Vec::new()),
        "IMPROV" => (
            table(&[
                (&[1, 2, 3, 4], &[5], &[6]),
                (&[1, 2, 3, 6], &[4], &[5]),
                (&[1, 2, 5, 6], &[3], &[4]),
                (&[1, 4, 5, 6], &[2], &[3]),
                (&[3, 4, 5, 6], &[1], &[2]),
                (&[2, 3, 4, 5], &[6], &[1]),
            ]),
            Vec::new(),
        ),
        "CREMA-D" => (five_session_rotation(), crema_d_sessions()),
        "IEMOCAP-CH3" => {
            let train: [&[u32]; 5] = [&[1, 2, 3, 4], &[2, 3, 4, 5], &[3, 4, 5, 1], &[1, 4, 5, 2], &[1, 2, 5, 3]];
            let test = [5, 1, 2, 3, 4];
            let folds = train
                .iter()
                .zip(test)
                .map(|(tr, te)| Fold {
                    train: sessions(tr),
                    dev: vec![Selector::RandomFractionOfTrain { fraction: 0.1, seed }],
                    test: sessions(&[te]),
                })
                .collect();
            (folds, Vec::new())
        }
        other => {
            return Err(Error::UnknownDataset {
                given: other.to_string(),
                supported: SUPPORTED_DATASETS.join(", "),
            })
        }
    };
    Ok(PartitionManifest {
        dataset_id: dataset_id.to_string(),
        folds,
        sessions,
    })
}

fn session_names(selectors: &[Selector]) -> HashSet<&str> {
    selectors
        .iter()
        .filter_map(|s| match s {
            Selector::Session(name) => Some(name.as_str()),
            Selector::RandomFractionOfTrain { .. } => None,
        })
        .collect()
}

/// Session labels match exactly, or numerically when both are integers
/// ("01" matches "1").
fn same_session(a: &str, b: &str) -> bool {
    a == b
        || matches!((a.parse::<u64>(), b.parse::<u64>()), (Ok(x), Ok(y)) if x == y)
}

impl PartitionManifest {
    /// Checks pairwise disjointness within each fold and that the test
    /// selectors cover every session exactly once across folds.
    pub fn validate(&self) -> Result<()> {
        let mut test_seen: Vec<&str> = Vec::new();
        let mut all: HashSet<&str> = HashSet::new();
        for (k, fold) in self.folds.iter().enumerate() {
            let (tr, dv, te) = (session_names(&fold.train), session_names(&fold.dev), session_names(&fold.test));
            if !tr.is_disjoint(&dv) || !tr.is_disjoint(&te) || !dv.is_disjoint(&te) {
                return Err(Error::InvalidArgument(format!("fold {} selectors overlap", k + 1)));
            }
            test_seen.extend(te.iter().copied());
            all.extend(tr.iter().chain(&dv).chain(&te).copied());
        }
        let unique: HashSet<&str> = test_seen.iter().copied().collect();
        if unique.len() != test_seen.len() || unique != all {
            return Err(Error::InvalidArgument(
                "test selectors must cover every session exactly once".into(),
            ));
        }
        Ok(())
    }

    /// Session an utterance belongs to: its session field, or for
    /// speaker-defined corpora, the session containing its speaker.
    fn session_of<'a>(&'a self, session: Option<&'a str>, speaker: Option<&str>) -> Option<&'a str> {
        if !self.sessions.is_empty() {
            let spk = speaker?;
            return self
                .sessions
                .iter()
                .find(|s| s.speakers.iter().any(|x| same_session(x, spk)))
                .map(|s| s.session.as_str());
        }
        session
    }

    /// Resolves fold `k` (0-based) against a corpus.
    pub fn resolve(&self, k: usize, corpus: &Corpus) -> Result<FoldSplit> {
        let fold = self
            .folds
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("fold {} out of range", k + 1)))?;
        let member = |sels: &[Selector], session: Option<&str>| {
            session.is_some_and(|s| session_names(sels).iter().any(|x| same_session(x, s)))
        };
        let mut split = FoldSplit::default();
        for u in corpus.utterances() {
            let s = self.session_of(u.session.as_deref(), u.speaker.as_deref());
            if member(&fold.test, s) {
                split.test.push(u.id.clone());
            } else if member(&fold.dev, s) {
                split.dev.push(u.id.clone());
            } else if member(&fold.train, s) {
                split.train.push(u.id.clone());
            }
        }
        for sel in &fold.dev {
            if let Selector::RandomFractionOfTrain { fraction, seed } = *sel {
                let (train, dev) = carve_random_fraction(&split.train, fraction, seed);
                split.train = train;
                split.dev.extend(dev);
            }
        }
        Ok(split)
    }
}

/// Splits ids into (remaining, carved) with `round(fraction * n)` carved out.
pub fn carve_random_fraction(ids: &[String], fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let n_dev = (fraction * ids.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let dev: HashSet<usize> = order.into_iter().take(n_dev).collect();
    let mut keep = Vec::new();
    let mut carved = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        if dev.contains(&i) {
            carved.push(id.clone());
        } else {
            keep.push(id.clone());
        }
    }
    (keep, carved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EmotionClassSet, Utterance};

    fn s(v: &[u32]) -> Vec<Selector> {
        sessions(v)
    }

    #[test]
    fn iemocap_fold_one() {
        let m = standard_partition("IEMOCAP", 0).unwrap();
        assert_eq!(m.folds.len(), 5);
        assert_eq!(m.folds[0].train, s(&[1, 2, 3]));
        assert_eq!(m.folds[0].dev, s(&[4]));
        assert_eq!(m.folds[0].test, s(&[5]));
    }

    #[test]
    fn improv_fold_one() {
        let m = standard_partition("IMPROV", 0).unwrap();
        assert_eq!(m.folds.len(), 6);
        assert_eq!(m.folds[0].train, s(&[1, 2, 3, 4]));
        assert_eq!(m.folds[0].dev, s(&[5]));
        assert_eq!(m.folds[0].test, s(&[6]));
    }

    #[test]
    fn crema_d_session_one_speakers() {
        let m = standard_partition("CREMA-D", 0).unwrap();
        assert_eq!(m.sessions.len(), 5);
        let s1 = &m.sessions[0];
        assert_eq!((s1.male, s1.female), (7, 11));
        assert_eq!(s1.speakers.first().unwrap(), "1037");
        assert_eq!(s1.speakers.last().unwrap(), "1054");
        assert_eq!(s1.speakers.len(), 18);
        let total: usize = m.sessions.iter().map(|s| s.speakers.len()).sum();
        assert_eq!(total, 91);
    }

    #[test]
    fn all_builtins_validate() {
        assert_eq!(standard_partition("IEMOCAP", 0).unwrap().folds[4].train, s(&[1, 2, 5]));
        for id in SUPPORTED_DATASETS {
            standard_partition(id, 1).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn unknown_dataset_lists_supported() {
        let err = standard_partition("MSP", 0).unwrap_err().to_string();
        assert!(err.contains("IEMOCAP") && err.contains("CREMA-D"), "{err}");
    }

    #[test]
    fn validate_catches_overlap_and_gaps() {
        let mut m = standard_partition("IEMOCAP", 0).unwrap();
        m.folds[0].dev = s(&[3]);
        assert!(m.validate().is_err());
        let mut m = standard_partition("IEMOCAP", 0).unwrap();
        m.folds[1].test = s(&[5]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn resolve_with_random_dev() {
        let cs = EmotionClassSet::parse("N,A").unwrap();
        let utts = (0..100)
            .map(|i| {
                let mut u = Utterance::from_votes(format!("u{i:03}"), ["N"]);
                u.session = Some(format!("Ses0{}", 1 + i % 5).trim_start_matches("Ses").to_string());
                u
            })
            .collect();
        let corpus = Corpus::new("t", cs, utts).unwrap();
        let m = standard_partition("IEMOCAP-CH3", 11).unwrap();
        let split = m.resolve(0, &corpus).unwrap();
        assert_eq!(split.test.len(), 20);
        assert_eq!(split.dev.len(), 8);
        assert_eq!(split.train.len(), 72);
        assert_eq!(split, m.resolve(0, &corpus).unwrap());
    }

    #[test]
    fn manifest_json_shape() {
        let m = standard_partition("IEMOCAP", 0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["dataset_id"], "IEMOCAP");
        assert_eq!(v["folds"][0]["test"][0]["session"], "5");
        let back: PartitionManifest = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
