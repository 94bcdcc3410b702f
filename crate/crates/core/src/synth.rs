//! Synthetic annotation corpora with controllable rater populations.
//!
//! Each utterance gets a hidden true class (or a two-class mixture), every
//! rater independently rates it with probability `coverage`, and an emitted
//! label is drawn from the rater's confusion row. Features come from a
//! class-conditional spherical Gaussian. The hidden truth is returned
//! separately and never enters the [`Corpus`].

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng as _;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmotionClassSet, Rating, Utterance};
use crate::error::{Error, Result};
use crate::io::FeatureTable;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterProfile {
    pub rater_id: String,
    /// Row = true class, column = emitted label; rows sum to 1.
    pub confusion: Vec<Vec<f64>>,
    pub coverage: f64,
}

impl RaterProfile {
    /// Correct with probability `accuracy`, otherwise uniform over the other
    /// classes.
    pub fn uniform_noise(rater_id: impl Into<String>, c: usize, accuracy: f64, coverage: f64) -> Self {
        let off = if c > 1 { (1.0 - accuracy) / (c - 1) as f64 } else { 0.0 };
        Self {
            rater_id: rater_id.into(),
            confusion: (0..c)
                .map(|i| (0..c).map(|j| if i == j { accuracy } else { off }).collect())
                .collect(),
            coverage,
        }
    }

    pub fn faithful(rater_id: impl Into<String>, c: usize) -> Self {
        Self::uniform_noise(rater_id, c, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ambiguity {
    /// Share of utterances whose truth is a two-class mixture.
    pub rate: f64,
    /// Weight of the primary class in a mixture.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub dim: usize,
    /// Scale of the class means (drawn once per corpus).
    pub separation: f64,
    pub noise_std: f64,
}

impl Default for FeatureModel {
    fn default() -> Self {
        Self {
            dim: 8,
            separation: 2.0,
            noise_std: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: Vec<String>,
    pub n_utterances: usize,
    pub prior: Vec<f64>,
    pub raters: Vec<RaterProfile>,
    #[serde(default)]
    pub ambiguity: Option<Ambiguity>,
    #[serde(default)]
    pub features: FeatureModel,
    /// Sessions are assigned round-robin when nonzero.
    #[serde(default)]
    pub sessions: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Uniform prior, `n_raters` raters of the given accuracy and coverage.
    pub fn simple(classes: &[&str], n_utterances: usize, n_raters: usize, accuracy: f64, coverage: f64, seed: u64) -> Self {
        let c = classes.len();
        Self {
            classes: classes.iter().map(|s| s.to_string()).collect(),
            n_utterances,
            prior: vec![1.0 / c as f64; c],
            raters: (1..=n_raters)
                .map(|r| RaterProfile::uniform_noise(format!("r{r}"), c, accuracy, coverage))
                .collect(),
            ambiguity: None,
            features: FeatureModel::default(),
            sessions: 0,
            seed,
        }
    }

    fn validate(&self) -> Result<EmotionClassSet> {
        let cs = EmotionClassSet::new(self.classes.clone())?;
        let c = cs.len();
        if self.n_utterances == 0 {
            return Err(Error::InvalidArgument("n_utterances must be at least 1".into()));
        }
        check_simplex("prior", &self.prior, c)?;
        if self.raters.is_empty() {
            return Err(Error::InvalidArgument("at least one rater is required".into()));
        }
        for r in &self.raters {
            if r.confusion.len() != c {
                return Err(Error::shape(format!("{c} confusion rows"), r.confusion.len()));
            }
            for row in &r.confusion {
                check_simplex(&format!("confusion row of {}", r.rater_id), row, c)?;
            }
            if !(r.coverage > 0.0 && r.coverage <= 1.0) {
                return Err(Error::InvalidArgument(format!("coverage of {} must lie in (0, 1]", r.rater_id)));
            }
        }
        if let Some(a) = &self.ambiguity {
            if !(0.0..=1.0).contains(&a.rate) || !(0.0..=1.0).contains(&a.weight) {
                return Err(Error::InvalidArgument("ambiguity rate and weight must lie in [0, 1]".into()));
            }
        }
        if self.features.dim == 0 || !(self.features.noise_std >= 0.0) {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        Ok(cs)
    }
}

fn check_simplex(name: &str, v: &[f64], c: usize) -> Result<()> {
    if v.len() != c {
        return Err(Error::shape(format!("{name} of length {c}"), v.len()));
    }
    if v.iter().any(|&p| !(p >= 0.0)) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("{name} is not a probability vector")));
    }
    Ok(())
}

/// Hidden ground truth for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueLabel {
    Class(usize),
    Mixture { primary: usize, secondary: usize, weight: f64 },
}

impl TrueLabel {
    /// Probability vector over classes.
    pub fn distribution(&self, c: usize) -> Vec<f64> {
        let mut v = vec![0.0; c];
        match *self {
            TrueLabel::Class(k) => v[k] = 1.0,
            TrueLabel::Mixture { primary, secondary, weight } => {
                v[primary] = weight;
                v[secondary] = 1.0 - weight;
            }
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub truth: BTreeMap<String, TrueLabel>,
    pub features: FeatureTable,
}

impl SynthOutput {
    /// Truth table keyed by utterance id with class names, for JSON output.
    pub fn truth_json(&self) -> serde_json::Value {
        let names = self.corpus.class_set.names();
        let map: serde_json::Map<String, serde_json::Value> = self
            .truth
            .iter()
            .map(|(id, t)| {
                let v = match *t {
                    TrueLabel::Class(k) => serde_json::Value::String(names[k].clone()),
                    TrueLabel::Mixture { primary, secondary, weight } => serde_json::json!({
                        "mixture": [
                            { "class": names[primary], "weight": weight },
                            { "class": names[secondary], "weight": 1.0 - weight },
                        ]
                    }),
                };
                (id.clone(), v)
            })
            .collect();
        serde_json::Value::Object(map)
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    let class_set = cfg.validate()?;
    let c = class_set.len();
    let d = cfg.features.dim;
    let mut rng = rng::seeded(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let means: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..d).map(|_| cfg.features.separation * std_normal.sample(&mut rng)).collect())
        .collect();
    let prior = WeightedIndex::new(&cfg.prior).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let emit: Vec<Vec<WeightedIndex<f64>>> = cfg
        .raters
        .iter()
        .map(|r| r.confusion.iter().map(|row| WeightedIndex::new(row).expect("validated row")).collect())
        .collect();
    let width = cfg.n_utterances.to_string().len();

    let mut utterances = Vec::with_capacity(cfg.n_utterances);
    let mut truth = BTreeMap::new();
    let mut feats = Array2::zeros((cfg.n_utterances, d));
    let mut ids = Vec::with_capacity(cfg.n_utterances);
    for i in 0..cfg.n_utterances {
        let id = format!("utt{i:0width$}");
        let primary = prior.sample(&mut rng);
        let label = match &cfg.ambiguity {
            Some(a) if c > 1 && rng.random::<f64>() < a.rate => {
                let mut secondary = rng.random_range(0..c - 1);
                if secondary >= primary {
                    secondary += 1;
                }
                TrueLabel::Mixture { primary, secondary, weight: a.weight }
            }
            _ => TrueLabel::Class(primary),
        };
        let mut raters: Vec<usize> = (0..cfg.raters.len())
            .filter(|&r| rng.random::<f64>() < cfg.raters[r].coverage)
            .collect();
        if raters.is_empty() {
            raters.push(rng.random_range(0..cfg.raters.len()));
        }
        let mut utt = Utterance::new(id.clone());
        for r in raters {
            let underlying = match label {
                TrueLabel::Class(k) => k,
                TrueLabel::Mixture { primary, secondary, weight } => {
                    if rng.random::<f64>() < weight {
                        primary
                    } else {
                        secondary
                    }
                }
            };
            let emitted = emit[r][underlying].sample(&mut rng);
            utt.ratings.push(Rating {
                rater_id: cfg.raters[r].rater_id.clone(),
                class_name: class_set.name(emitted).to_string(),
            });
        }
        if cfg.sessions > 0 {
            utt.session = Some((1 + i % cfg.sessions).to_string());
        }
        let dist = label.distribution(c);
        for k in 0..d {
            let mean: f64 = (0..c).map(|j| dist[j] * means[j][k]).sum();
            feats[[i, k]] = mean + cfg.features.noise_std * std_normal.sample(&mut rng);
        }
        truth.insert(id.clone(), label);
        ids.push(id);
        utterances.push(utt);
    }
    let corpus = Corpus::new("synthetic", class_set, utterances)?;
    let columns = (1..=d).map(|k| format!("f{k}")).collect();
    Ok(SynthOutput {
        corpus,
        truth,
        features: FeatureTable::new(ids, columns, feats)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterCheck {
    pub rater_id: String,
    pub rated: usize,
    pub expected: f64,
    pub coverage_ok: bool,
    /// Largest total-variation distance between an empirical emission row and
    /// the configured confusion row, and whether every row met its bound.
    pub max_tv: f64,
    pub emission_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub n: usize,
    /// False when the corpus is too small for the convergence bounds.
    pub checked: bool,
    pub class_frequency: Vec<f64>,
    pub prior_deviation: f64,
    pub prior_ok: bool,
    pub raters: Vec<RaterCheck>,
}

impl EmpiricalReport {
    pub fn passed(&self) -> bool {
        !self.checked || (self.prior_ok && self.raters.iter().all(|r| r.coverage_ok && r.emission_ok))
    }
}

/// Below this size the convergence checks are skipped.
pub const MIN_CHECK_SIZE: usize = 30;

/// Compares a generated corpus against its configuration: primary-class
/// frequencies against the prior (within `2/sqrt(n)`), rater coverage (within
/// `3 sqrt(n)` utterances) and emission rows on unmixed utterances (total
/// variation within `3/sqrt(cell size)`).
pub fn empirical_check(corpus: &Corpus, truth: &BTreeMap<String, TrueLabel>, cfg: &SynthConfig) -> EmpiricalReport {
    let c = corpus.num_classes();
    let n = corpus.len();
    let mut freq = vec![0.0; c];
    for t in truth.values() {
        let k = match *t {
            TrueLabel::Class(k) => k,
            TrueLabel::Mixture { primary, .. } => primary,
        };
        freq[k] += 1.0;
    }
    freq.iter_mut().for_each(|f| *f /= n.max(1) as f64);
    let prior_deviation = freq.iter().zip(&cfg.prior).map(|(f, p)| (f - p).abs()).fold(0.0, f64::max);
    let checked = n >= MIN_CHECK_SIZE;
    let sqrt_n = (n as f64).sqrt();

    let raters = cfg
        .raters
        .iter()
        .map(|profile| {
            let mut rated = 0usize;
            let mut cells = vec![vec![0usize; c]; c];
            for u in corpus.utterances() {
                let Some(r) = u.ratings.iter().find(|r| r.rater_id == profile.rater_id) else { continue };
                rated += 1;
                if let (Some(TrueLabel::Class(k)), Some(j)) = (truth.get(&u.id), corpus.class_set.index_of(&r.class_name)) {
                    cells[*k][j] += 1;
                }
            }
            let mut max_tv: f64 = 0.0;
            let mut emission_ok = true;
            for (k, row) in cells.iter().enumerate() {
                let total: usize = row.iter().sum();
                if total == 0 {
                    continue;
                }
                let tv = 0.5
                    * row
                        .iter()
                        .zip(&profile.confusion[k])
                        .map(|(&cnt, &p)| (cnt as f64 / total as f64 - p).abs())
                        .sum::<f64>();
                max_tv = max_tv.max(tv);
                emission_ok &= tv <= 3.0 / (total as f64).sqrt();
            }
            let expected = profile.coverage * n as f64;
            RaterCheck {
                rater_id: profile.rater_id.clone(),
                rated,
                expected,
                coverage_ok: (rated as f64 - expected).abs() <= 3.0 * sqrt_n,
                max_tv,
                emission_ok,
            }
        })
        .collect();
    EmpiricalReport {
        n,
        checked,
        class_frequency: freq,
        prior_deviation,
        prior_ok: prior_deviation <= 2.0 / sqrt_n.max(1.0),
        raters,
    }
}
