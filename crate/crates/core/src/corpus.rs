//! Annotation data model: class sets, per-rater ratings, utterances and
//! corpora, plus CSV ingestion and vote counting.
//!
//! A [`Corpus`] is kept in canonical order (utterances sorted by id, ratings
//! sorted by rater id) so that two files holding the same ratings in a
//! different row order load into equal values.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Ordered set of emotion classes. The order fixes vector index semantics for
/// every encoding, matrix and metric downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct EmotionClassSet {
    classes: Vec<String>,
}

impl EmotionClassSet {
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Result<Self> {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.len() < 2 {
            return Err(Error::ClassSet(format!(
                "need at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &classes {
            if c.trim().is_empty() {
                return Err(Error::ClassSet("empty class name".into()));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::ClassSet(format!("duplicate class `{c}`")));
            }
        }
        Ok(Self { classes })
    }

    /// Parses a comma-separated list such as `N,H,A,S`.
    pub fn parse(list: &str) -> Result<Self> {
        Self::new(list.split(',').map(|s| s.trim().to_string()))
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, index: usize) -> &str {
        &self.classes[index]
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }
}

impl TryFrom<Vec<String>> for EmotionClassSet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EmotionClassSet> for Vec<String> {
    fn from(c: EmotionClassSet) -> Self {
        c.classes
    }
}

/// One vote by one rater on one utterance. The class may fall outside the
/// corpus class set (e.g. "other").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub rater_id: String,
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub session: Option<String>,
    pub speaker: Option<String>,
    pub ratings: Vec<Rating>,
}

impl Utterance {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            session: None,
            speaker: None,
            ratings: Vec::new(),
        }
    }

    pub fn with_ratings<R, C>(id: impl Into<String>, ratings: impl IntoIterator<Item = (R, C)>) -> Self
    where
        R: Into<String>,
        C: Into<String>,
    {
        let mut u = Self::new(id);
        u.ratings = ratings
            .into_iter()
            .map(|(r, c)| Rating {
                rater_id: r.into(),
                class_name: c.into(),
            })
            .collect();
        u
    }

    /// Builds an utterance from class names alone, naming raters `r1..rn`.
    pub fn from_votes<C: Into<String>>(id: impl Into<String>, votes: impl IntoIterator<Item = C>) -> Self {
        Self::with_ratings(
            id,
            votes
                .into_iter()
                .enumerate()
                .map(|(i, c)| (format!("r{}", i + 1), c)),
        )
    }

    pub fn out_of_set_count(&self, class_set: &EmotionClassSet) -> usize {
        self.ratings
            .iter()
            .filter(|r| class_set.index_of(&r.class_name).is_none())
            .count()
    }
}

/// Per-utterance vote vector over the class set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteCount {
    pub counts: Vec<u32>,
    pub total_in_set: u32,
    /// Includes votes for classes outside the class set.
    pub total_all: u32,
}

impl VoteCount {
    /// Count vector with no out-of-set votes.
    pub fn from_counts(counts: Vec<u32>) -> Self {
        let total: u32 = counts.iter().sum();
        Self {
            counts,
            total_in_set: total,
            total_all: total,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Indices of every class holding the maximum count.
    pub fn argmax_set(&self) -> Vec<usize> {
        let max = self.max_count();
        self.counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == max)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn vote_counts(utterance: &Utterance, class_set: &EmotionClassSet) -> VoteCount {
    let mut counts = vec![0u32; class_set.len()];
    for r in &utterance.ratings {
        if let Some(j) = class_set.index_of(&r.class_name) {
            counts[j] += 1;
        }
    }
    VoteCount {
        total_in_set: counts.iter().sum(),
        total_all: utterance.ratings.len() as u32,
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub class_set: EmotionClassSet,
    utterances: Vec<Utterance>,
}

impl Corpus {
    /// Validates id uniqueness and one-vote-per-rater, then canonicalizes order.
    pub fn new(name: impl Into<String>, class_set: EmotionClassSet, mut utterances: Vec<Utterance>) -> Result<Self> {
        let mut ids = HashSet::new();
        for u in &mut utterances {
            if !ids.insert(u.id.clone()) {
                return Err(Error::DuplicateUtterance(u.id.clone()));
            }
            u.ratings.sort_by(|a, b| a.rater_id.cmp(&b.rater_id));
            if let Some(w) = u.ratings.windows(2).find(|w| w[0].rater_id == w[1].rater_id) {
                return Err(Error::DuplicateRating {
                    utterance: u.id.clone(),
                    rater: w[0].rater_id.clone(),
                    line: 0,
                });
            }
        }
        utterances.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self {
            name: name.into(),
            class_set,
            utterances,
        })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_set.len()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances
            .binary_search_by(|u| u.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.utterances[i])
    }

    pub fn vote_counts(&self) -> Vec<VoteCount> {
        self.utterances
            .iter()
            .map(|u| vote_counts(u, &self.class_set))
            .collect()
    }

    pub fn total_ratings(&self) -> usize {
        self.utterances.iter().map(|u| u.ratings.len()).sum()
    }

    pub fn out_of_set_ratings(&self) -> usize {
        self.utterances
            .iter()
            .map(|u| u.out_of_set_count(&self.class_set))
            .sum()
    }

    /// Sorted, de-duplicated rater ids.
    pub fn rater_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .utterances
            .iter()
            .flat_map(|u| u.ratings.iter().map(|r| r.rater_id.clone()))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Sub-corpus restricted to the given ids; unknown ids are ignored.
    pub fn filter_ids<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Corpus {
        let keep: HashSet<&str> = ids.into_iter().collect();
        Corpus {
            name: self.name.clone(),
            class_set: self.class_set.clone(),
            utterances: self
                .utterances
                .iter()
                .filter(|u| keep.contains(u.id.as_str()))
                .cloned()
                .collect(),
        }
    }

    /// Concatenates two corpora over the same class set.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus> {
        if self.class_set != other.class_set {
            return Err(Error::InvalidArgument("class sets differ".into()));
        }
        let mut all = self.utterances.clone();
        all.extend(other.utterances.iter().cloned());
        Corpus::new(self.name.clone(), self.class_set.clone(), all)
    }

    /// Uniformly random `n`-utterance sub-corpus, deterministic per seed.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Corpus> {
        if n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot subsample {n} of {} utterances",
                self.len()
            )));
        }
        let mut picked = index::sample(&mut rng::seeded(seed), self.len(), n).into_vec();
        picked.sort_unstable();
        Ok(Corpus {
            name: self.name.clone(),
            class_set: self.class_set.clone(),
            utterances: picked.into_iter().map(|i| self.utterances[i].clone()).collect(),
        })
    }

    /// Sub-corpus of the utterances a rater rated, each carrying only that
    /// rater's rating.
    pub fn per_rater_view(&self, rater_id: &str) -> Result<Corpus> {
        let utterances: Vec<Utterance> = self
            .utterances
            .iter()
            .filter_map(|u| {
                let mine: Vec<Rating> = u
                    .ratings
                    .iter()
                    .filter(|r| r.rater_id == rater_id)
                    .cloned()
                    .collect();
                (!mine.is_empty()).then(|| Utterance {
                    ratings: mine,
                    ..u.clone()
                })
            })
            .collect();
        if utterances.is_empty() {
            return Err(Error::UnknownRater(rater_id.to_string()));
        }
        Ok(Corpus {
            name: format!("{}[{rater_id}]", self.name),
            class_set: self.class_set.clone(),
            utterances,
        })
    }
}

/// Column names used when reading an annotation file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationSchema {
    pub utterance: String,
    pub rater: String,
    pub class: String,
    pub session: Option<String>,
    pub speaker: Option<String>,
}

impl Default for AnnotationSchema {
    fn default() -> Self {
        Self {
            utterance: "utterance_id".into(),
            rater: "rater_id".into(),
            class: "class".into(),
            session: Some("session".into()),
            speaker: Some("speaker".into()),
        }
    }
}

pub fn load_annotations(path: impl AsRef<Path>, class_set: &EmotionClassSet, schema: &AnnotationSchema) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_annotations_named(file, path.to_path_buf(), name, class_set, schema)
}

pub fn read_annotations<R: Read>(reader: R, class_set: &EmotionClassSet, schema: &AnnotationSchema) -> Result<Corpus> {
    read_annotations_named(reader, PathBuf::from("<input>"), String::new(), class_set, schema)
}

fn read_annotations_named<R: Read>(
    reader: R,
    path: PathBuf,
    name: String,
    class_set: &EmotionClassSet,
    schema: &AnnotationSchema,
) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        column(name).ok_or_else(|| Error::Ingest {
            path: path.clone(),
            line: 1,
            msg: format!("missing column `{name}`"),
        })
    };
    let u_col = required(&schema.utterance)?;
    let r_col = required(&schema.rater)?;
    let c_col = required(&schema.class)?;
    let s_col = schema.session.as_deref().and_then(column);
    let k_col = schema.speaker.as_deref().and_then(column);

    let mut by_id: BTreeMap<String, Utterance> = BTreeMap::new();
    let mut seen: HashMap<(String, String), u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize, what: &str| -> Result<String> {
            match rec.get(col) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(Error::Ingest {
                    path: path.clone(),
                    line,
                    msg: format!("missing {what}"),
                }),
            }
        };
        let optional = |col: Option<usize>| {
            col.and_then(|c| rec.get(c))
                .filter(|v| !v.is_empty())
                .map(str::to_string)
        };
        let uid = field(u_col, "utterance id")?;
        let rater = field(r_col, "rater id")?;
        let class = field(c_col, "class")?;
        if seen.insert((uid.clone(), rater.clone()), line).is_some() {
            return Err(Error::DuplicateRating {
                utterance: uid,
                rater,
                line,
            });
        }
        let utt = by_id.entry(uid.clone()).or_insert_with(|| Utterance::new(uid));
        let session = optional(s_col);
        let speaker = optional(k_col);
        if utt.session.is_none() {
            utt.session = session;
        }
        if utt.speaker.is_none() {
            utt.speaker = speaker;
        }
        utt.ratings.push(Rating {
            rater_id: rater,
            class_name: class,
        });
    }
    Corpus::new(name, class_set.clone(), by_id.into_values().collect())
}

/// Writes the corpus in the canonical annotation CSV layout.
pub fn write_annotations<W: Write>(corpus: &Corpus, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["utterance_id", "rater_id", "class", "session", "speaker"])?;
    for u in corpus.utterances() {
        for r in &u.ratings {
            w.write_record([
                u.id.as_str(),
                r.rater_id.as_str(),
                r.class_name.as_str(),
                u.session.as_deref().unwrap_or(""),
                u.speaker.as_deref().unwrap_or(""),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nhas() -> EmotionClassSet {
        EmotionClassSet::parse("N,H,A,S").unwrap()
    }

    fn load(text: &str, classes: &EmotionClassSet) -> Result<Corpus> {
        read_annotations(text.as_bytes(), classes, &AnnotationSchema::default())
    }

    #[test]
    fn class_set_rejects_bad_input() {
        assert!(EmotionClassSet::parse("N").is_err());
        assert!(EmotionClassSet::parse("N,N").is_err());
        assert!(EmotionClassSet::parse("N,,A").is_err());
        assert_eq!(nhas().index_of("A"), Some(2));
    }

    #[test]
    fn three_row_file() {
        let classes = EmotionClassSet::parse("N,A").unwrap();
        let c = load(
            "utterance_id,rater_id,class,session,speaker\nu1,r1,N,,\nu1,r2,A,,\nu2,r1,N,,\n",
            &classes,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        let vc = c.vote_counts();
        assert_eq!(vc[0].counts, vec![1, 1]);
        assert_eq!(vc[1].counts, vec![1, 0]);
    }

    #[test]
    fn other_class_is_kept_but_not_counted() {
        let c = load(
            "utterance_id,rater_id,class\nu1,r1,N\nu1,r2,other\nu1,r3,A\nu1,r4,other\nu2,r1,S\n",
            &nhas(),
        )
        .unwrap();
        let vc = vote_counts(c.get("u1").unwrap(), &c.class_set);
        assert_eq!(vc.total_in_set, 2);
        assert_eq!(vc.total_all, 4);
        assert_eq!(c.out_of_set_ratings(), 2);
        assert_eq!(c.total_ratings(), 5);
    }

    #[test]
    fn duplicate_pair_is_rejected() {
        let err = load("utterance_id,rater_id,class\nu1,r1,N\nu1,r1,A\n", &nhas()).unwrap_err();
        assert!(matches!(err, Error::DuplicateRating { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_field_names_line() {
        let err = load("utterance_id,rater_id,class\nu1,r1,N\nu2,,A\n", &nhas()).unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        assert!(load("utterance_id,class\nu1,N\n", &nhas()).is_err());
    }

    #[test]
    fn row_order_does_not_matter() {
        let a = load("utterance_id,rater_id,class\nu1,r1,N\nu2,r2,A\nu1,r2,S\n", &nhas()).unwrap();
        let b = load("utterance_id,rater_id,class\nu1,r2,S\nu2,r2,A\nu1,r1,N\n", &nhas()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_cases_vote_counts() {
        let cs = nhas();
        let c1 = Utterance::from_votes("C1", ["N", "N", "A", "A", "S"]);
        let c2 = Utterance::from_votes("C2", ["N", "N", "H", "A", "S"]);
        assert_eq!(vote_counts(&c1, &cs).counts, vec![2, 0, 2, 1]);
        assert_eq!(vote_counts(&c1, &cs).total_in_set, 5);
        assert_eq!(vote_counts(&c2, &cs).counts, vec![2, 1, 1, 1]);
        let empty = vote_counts(&Utterance::new("e"), &cs);
        assert_eq!(empty.counts, vec![0, 0, 0, 0]);
        assert_eq!(empty.total_all, 0);
    }

    #[test]
    fn subsample_edges() {
        let cs = nhas();
        let utts = (0..10).map(|i| Utterance::from_votes(format!("u{i}"), ["N"])).collect();
        let c = Corpus::new("t", cs.clone(), utts).unwrap();
        assert_eq!(c.subsample(10, 3).unwrap(), c);
        let empty = c.subsample(0, 3).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.class_set, cs);
        assert_eq!(c.subsample(4, 9).unwrap(), c.subsample(4, 9).unwrap());
        assert!(c.subsample(11, 0).is_err());
    }

    #[test]
    fn per_rater_view_filters() {
        let utts = vec![
            Utterance::with_ratings("u1", [("r1", "N")]),
            Utterance::with_ratings("u2", [("r1", "A"), ("r2", "S")]),
        ];
        let c = Corpus::new("t", nhas(), utts).unwrap();
        let v = c.per_rater_view("r1").unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.utterances().iter().all(|u| u.ratings.len() == 1 && u.ratings[0].rater_id == "r1"));
        assert_eq!(c.per_rater_view("r2").unwrap().len(), 1);
        assert!(matches!(c.per_rater_view("r9"), Err(Error::UnknownRater(_))));
    }

    #[test]
    fn write_then_read_is_identity() {
        let utts = vec![
            Utterance::with_ratings("u1", [("r1", "N"), ("r2", "other")]),
            Utterance::with_ratings("u2", [("r1", "A")]),
        ];
        let c = Corpus::new("", nhas(), utts).unwrap();
        let mut buf = Vec::new();
        write_annotations(&c, &mut buf).unwrap();
        assert_eq!(load(std::str::from_utf8(&buf).unwrap(), &nhas()).unwrap(), c);
    }
}
