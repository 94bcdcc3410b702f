//! The `emolabel` command line.
//!
//! Every subcommand writes its outputs into `--out` together with a
//! `manifest.json` holding the fully resolved configuration and a SHA-256 of
//! each output file. `emolabel replay <manifest>` re-executes the recorded
//! configuration and fails unless every output is byte-identical.
//!
//! Exit codes: 0 on success, 2 on usage or input errors, 1 on internal errors.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{consensus_split, loss_report, loss_table, utterance_outcome, Rule, TestSet};
use crate::cooccurrence::{penalty_pipeline, read_matrix_csv, row_sum_weights, write_matrix_csv, PenaltyMatrix};
use crate::corpus::{load_annotations, vote_counts, write_annotations, AnnotationSchema, Corpus, EmotionClassSet};
use crate::encoding::{encode_corpus, EncodeConfig, LabelKind};
use crate::error::{Error, Result};
use crate::io::{write_atomic, FeatureTable};
use crate::losses::LossKind;
use crate::metrics::{binarize, eval_table, f1_scores, fold_split_metric_ttest, EvalReport};
use crate::partition::standard_partition;
use crate::synth::{generate, Ambiguity, FeatureModel, SynthConfig};
use crate::trainer::{train, Checkpoint, Network, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "emolabel", version, about = "Label aggregation, encoding, penalty and evaluation pipeline for multi-rater emotion corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Validate an annotation file and write it in canonical order.
    Ingest(IngestArgs),
    /// Emit a built-in speaker-independent fold table.
    Partition(PartitionArgs),
    /// Apply a consensus rule and report data and rating loss.
    Aggregate(AggregateArgs),
    /// Encode per-utterance training targets.
    Encode(EncodeArgs),
    /// Build the co-occurrence, co-existing weight and penalization matrices.
    Penalty(PenaltyArgs),
    /// Train the reference feed-forward model.
    Train(TrainArgs),
    /// Score a trained model on a rule-selected test set.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic corpus with known ground truth.
    Synth(SynthArgs),
    /// Summarise loss accounting or several evaluation reports in one table.
    Report(ReportArgs),
    /// Re-run a recorded manifest and verify its outputs byte for byte.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusArgs {
    /// Annotation CSV (utterance_id, rater_id, class, optional session and speaker).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated class set, e.g. N,H,A,S. Column order of every output.
    #[arg(long)]
    pub classes: String,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus> {
        let cs = EmotionClassSet::parse(&self.classes)?;
        load_annotations(&self.corpus, &cs, &AnnotationSchema::default())
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Raw annotation CSV, one row per rating.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Comma-separated class set.
    #[arg(long)]
    pub classes: String,
    #[arg(long, default_value = "utterance_id")]
    pub utterance_col: String,
    #[arg(long, default_value = "rater_id")]
    pub rater_col: String,
    #[arg(long, default_value = "class")]
    pub class_col: String,
    #[arg(long, default_value = "session")]
    pub session_col: String,
    #[arg(long, default_value = "speaker")]
    pub speaker_col: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PartitionArgs {
    /// IEMOCAP, IMPROV, CREMA-D or IEMOCAP-CH3.
    #[arg(long)]
    pub dataset: String,
    /// Seed for randomly carved dev sets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional corpus to resolve every fold into utterance ids.
    #[arg(long, requires = "classes")]
    pub corpus: Option<PathBuf>,
    /// Class set of --corpus.
    #[arg(long, requires = "corpus")]
    pub classes: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Consensus rule: mr, pr or ar.
    #[arg(long, default_value = "ar")]
    pub rule: Rule,
    /// Seed for the all-inclusive tie break.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// hard, fraction, alpha-soft or multi-hot.
    #[arg(long, default_value = "fraction")]
    pub kind: LabelKind,
    /// Rule selecting the utterances to encode (and the hard label).
    #[arg(long, default_value = "ar")]
    pub rule: Rule,
    /// Pseudo-count per class; alpha-soft only. Defaults to 0.75.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Label smoothing strength; `--smooth` alone means 0.05.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.05")]
    pub smooth: Option<f64>,
    /// Seed for the all-inclusive tie break.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PenaltyArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Feature CSV: utterance_id followed by numeric columns.
    #[arg(long)]
    pub features: PathBuf,
    /// Label CSV written by `encode`.
    #[arg(long)]
    pub labels: PathBuf,
    /// ce, bce or kld. bce trains a sigmoid head, the others a softmax head.
    #[arg(long, default_value = "ce")]
    pub loss: LossKind,
    /// Weight of the penalized loss term.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Weight of the base loss term.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Penalization matrix CSV written by `penalty`.
    #[arg(long)]
    pub penalty: Option<PathBuf>,
    /// Hidden layer widths, comma separated; `none` for a linear model.
    #[arg(long, default_value = "16")]
    pub hidden: String,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    /// Stop after this many epochs without dev-loss improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Share of the training rows held out for model selection.
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Restrict training to the ids listed in this file (one per line).
    #[arg(long)]
    pub ids: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Binarization threshold: `auto` is 1/C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Threshold {
    Auto,
    Fixed(f64),
}

impl Threshold {
    pub fn resolve(self, num_classes: usize) -> f64 {
        match self {
            Threshold::Auto => 1.0 / num_classes as f64,
            Threshold::Fixed(t) => t,
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threshold::Auto);
        }
        match s.parse::<f64>() {
            Ok(t) if t > 0.0 && t < 1.0 => Ok(Threshold::Fixed(t)),
            _ => Err(Error::InvalidArgument(format!("threshold `{s}` is neither `auto` nor in (0, 1)"))),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Auto => f.write_str("auto"),
            Threshold::Fixed(t) => write!(f, "{t}"),
        }
    }
}

impl From<Threshold> for String {
    fn from(t: Threshold) -> Self {
        t.to_string()
    }
}

impl TryFrom<String> for Threshold {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub input: CorpusArgs,
    /// mr, pr, ar, pr-mr or ar-pr.
    #[arg(long, default_value = "ar")]
    pub test_rule: TestSet,
    /// Encoding of the reference labels.
    #[arg(long, default_value = "fraction")]
    pub truth_kind: LabelKind,
    /// `auto` (1/C) or a fixed value such as 0.5.
    #[arg(long, default_value = "auto")]
    pub threshold: Threshold,
    /// Restrict the test set to the ids listed in this file.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    /// Second checkpoint to compare against with the fold-split t-test.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Number of folds for the significance test.
    #[arg(long, default_value_t = 40)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// JSON generator configuration; overrides every other generator flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "N,H,A,S")]
    pub classes: String,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub raters: usize,
    /// Probability that a rater reports the true class.
    #[arg(long, default_value_t = 0.7)]
    pub accuracy: f64,
    /// Probability that a rater rates a given utterance.
    #[arg(long, default_value_t = 1.0)]
    pub coverage: f64,
    /// Share of two-class mixture utterances.
    #[arg(long, default_value_t = 0.0)]
    pub ambiguity: f64,
    /// Weight of the primary class in a mixture.
    #[arg(long, default_value_t = 0.5)]
    pub mix_weight: f64,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 5)]
    pub sessions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Corpus whose loss accounting under every rule is tabulated.
    #[arg(long, requires = "classes")]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub classes: Option<String>,
    /// Evaluation reports (`report.json` from `evaluate`) to tabulate.
    #[arg(long, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Write the replayed outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    /// Output file name to lowercase hex SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
}

impl PartialEq for Command {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

fn absolute(p: &mut PathBuf) -> Result<()> {
    *p = std::path::absolute(&*p).map_err(|e| Error::io(p.clone(), e))?;
    Ok(())
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Partition(_) => "partition",
            Command::Aggregate(_) => "aggregate",
            Command::Encode(_) => "encode",
            Command::Penalty(_) => "penalty",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Synth(_) => "synth",
            Command::Report(_) => "report",
            Command::Replay(_) => "replay",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Partition(a) => Some(a.seed),
            Command::Aggregate(a) => Some(a.seed),
            Command::Encode(a) => Some(a.seed),
            Command::Train(a) => Some(a.seed),
            Command::Evaluate(a) => Some(a.seed),
            Command::Synth(a) => Some(a.seed),
            _ => None,
        }
    }

    fn out_mut(&mut self) -> Option<&mut PathBuf> {
        Some(match self {
            Command::Ingest(a) => &mut a.out,
            Command::Partition(a) => &mut a.out,
            Command::Aggregate(a) => &mut a.out,
            Command::Encode(a) => &mut a.out,
            Command::Penalty(a) => &mut a.out,
            Command::Train(a) => &mut a.out,
            Command::Evaluate(a) => &mut a.out,
            Command::Synth(a) => &mut a.out,
            Command::Report(a) => &mut a.out,
            Command::Replay(_) => return None,
        })
    }

    fn inputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Ingest(a) => vec![&mut a.annotations],
            Command::Partition(a) => a.corpus.iter_mut().collect(),
            Command::Aggregate(a) => vec![&mut a.input.corpus],
            Command::Encode(a) => vec![&mut a.input.corpus],
            Command::Penalty(a) => vec![&mut a.input.corpus],
            Command::Train(a) => {
                let mut v = vec![&mut a.features, &mut a.labels];
                v.extend(a.penalty.iter_mut());
                v.extend(a.ids.iter_mut());
                v
            }
            Command::Evaluate(a) => {
                let mut v = vec![&mut a.model, &mut a.features, &mut a.input.corpus];
                v.extend(a.ids.iter_mut());
                v.extend(a.compare.iter_mut());
                v
            }
            Command::Synth(a) => a.config.iter_mut().collect(),
            Command::Report(a) => a.corpus.iter_mut().chain(a.reports.iter_mut()).collect(),
            Command::Replay(a) => vec![&mut a.manifest],
        }
    }

    /// Rewrites every path as absolute so a manifest replays from any
    /// working directory.
    fn absolutize(&mut self) -> Result<()> {
        for p in self.inputs_mut() {
            absolute(p)?;
        }
        if let Some(out) = self.out_mut() {
            absolute(out)?;
        }
        Ok(())
    }
}

/// Files a subcommand produces, plus text echoed to stdout.
#[derive(Debug, Default)]
struct Produced {
    files: Vec<(String, Vec<u8>)>,
    stdout: String,
}

impl Produced {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush().map_err(|e| Error::io("<output>", e))?;
    }
    Ok(buf)
}

fn matrix_bytes<T: ToString>(classes: &[String], values: &Array2<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_matrix_csv(classes, values, &mut buf)?;
    Ok(buf)
}

fn read_id_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn parse_hidden(widths: &str) -> Result<Vec<usize>> {
    let widths = widths.trim();
    if widths.is_empty() || widths.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    widths
        .split(',')
        .map(|w| match w.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidArgument(format!("hidden layer width `{w}` is not a positive integer"))),
        })
        .collect()
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn ingest(a: &IngestArgs) -> Result<Produced> {
    let cs = EmotionClassSet::parse(&a.classes)?;
    let schema = AnnotationSchema {
        utterance: a.utterance_col.clone(),
        rater: a.rater_col.clone(),
        class: a.class_col.clone(),
        session: Some(a.session_col.clone()),
        speaker: Some(a.speaker_col.clone()),
    };
    let corpus = load_annotations(&a.annotations, &cs, &schema)?;
    let mut out = Produced::default();
    let mut buf = Vec::new();
    write_annotations(&corpus, &mut buf)?;
    out.add("corpus.csv", buf);
    let sessions: BTreeSet<&str> = corpus.utterances().iter().filter_map(|u| u.session.as_deref()).collect();
    let summary = serde_json::json!({
        "name": corpus.name,
        "classes": corpus.class_set.names(),
        "utterances": corpus.len(),
        "ratings": corpus.total_ratings(),
        "out_of_set_ratings": corpus.out_of_set_ratings(),
        "raters": corpus.rater_ids().len(),
        "sessions": sessions.len(),
    });
    out.stdout = format!(
        "{} utterances, {} ratings ({} out of set), {} raters\n",
        corpus.len(),
        corpus.total_ratings(),
        corpus.out_of_set_ratings(),
        corpus.rater_ids().len()
    );
    out.add_json("summary.json", &summary)?;
    Ok(out)
}

fn partition(a: &PartitionArgs) -> Result<Produced> {
    let manifest = standard_partition(&a.dataset, a.seed)?;
    manifest.validate()?;
    let mut out = Produced::default();
    out.add_json("partition.json", &manifest)?;
    if let (Some(path), Some(classes)) = (&a.corpus, &a.classes) {
        let corpus = CorpusArgs {
            corpus: path.clone(),
            classes: classes.clone(),
        }
        .load()?;
        let mut rows = Vec::new();
        for k in 0..manifest.folds.len() {
            let split = manifest.resolve(k, &corpus)?;
            for (name, ids) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
                rows.extend(ids.iter().map(|id| ((k + 1).to_string(), name, id.clone())));
            }
        }
        out.add(
            "splits.csv",
            csv_bytes(&["fold", "split", "utterance_id"], |w| {
                for (f, s, id) in &rows {
                    w.write_record([f.as_str(), s, id.as_str()])?;
                }
                Ok(())
            })?,
        );
    }
    out.stdout = format!("{}: {} folds\n", manifest.dataset_id, manifest.folds.len());
    Ok(out)
}

fn aggregate(a: &AggregateArgs) -> Result<Produced> {
    let corpus = a.input.load()?;
    let names = corpus.class_set.names();
    let consensus = csv_bytes(&["utterance_id", "kept", "class", "tie_set"], |w| {
        for u in corpus.utterances() {
            let o = utterance_outcome(&vote_counts(u, &corpus.class_set), a.rule, a.seed, &u.id);
            let class = o.class_index.map_or("", |c| names[c].as_str());
            let ties: Vec<&str> = o.tie_set.iter().map(|&c| names[c].as_str()).collect();
            w.write_record([u.id.as_str(), if o.kept { "1" } else { "0" }, class, &ties.join("|")])?;
        }
        Ok(())
    })?;
    let report = loss_report(&corpus, a.rule);
    let table = loss_table(&corpus.name, std::slice::from_ref(&report));
    let mut out = Produced::default();
    out.add("consensus.csv", consensus);
    out.add_json("loss_report.json", &report)?;
    out.add("loss_table.txt", table.clone().into_bytes());
    out.stdout = table;
    Ok(out)
}

fn encode(a: &EncodeArgs) -> Result<Produced> {
    if a.alpha.is_some() && a.kind != LabelKind::AlphaSoft {
        return Err(Error::InvalidArgument("--alpha applies only to --kind alpha-soft".into()));
    }
    if a.smooth.is_some() && a.kind == LabelKind::MultiHot {
        return Err(Error::InvalidArgument("--smooth does not apply to --kind multi-hot".into()));
    }
    let corpus = a.input.load()?;
    let kept = consensus_split(&corpus, a.rule).kept;
    let selected = corpus.filter_ids(kept.iter().map(String::as_str));
    let cfg = EncodeConfig {
        kind: a.kind,
        rule: a.rule,
        alpha: a.alpha.unwrap_or(crate::encoding::DEFAULT_ALPHA),
        smoothing: a.smooth,
        seed: a.seed,
    };
    let labels = encode_corpus(&selected, &cfg)?;
    let c = corpus.num_classes();
    let ids: Vec<String> = labels.iter().map(|(id, _)| id.clone()).collect();
    let values: Vec<f64> = labels.iter().flat_map(|(_, v)| v.values.iter().copied()).collect();
    let table = FeatureTable::new(
        ids,
        corpus.class_set.names().to_vec(),
        Array2::from_shape_vec((labels.len(), c), values).expect("row-major labels"),
    )?;
    let alpha = match a.kind {
        LabelKind::AlphaSoft => cfg.alpha.to_string(),
        _ => "none".into(),
    };
    let smooth = a.smooth.map_or_else(|| "none".to_string(), |e| e.to_string());
    let comment = format!("kind={} rule={} alpha={alpha} smooth={smooth} seed={}", a.kind, a.rule, a.seed);
    let mut out = Produced::default();
    out.add("labels.csv", table.to_bytes(Some(&comment))?);
    out.stdout = format!("{} of {} utterances encoded ({comment})\n", table.len(), corpus.len());
    Ok(out)
}

fn penalty(a: &PenaltyArgs) -> Result<Produced> {
    let corpus = a.input.load()?;
    let (cc, wm, pm) = penalty_pipeline(&corpus)?;
    let mut out = Produced::default();
    out.add("counts.csv", matrix_bytes(&cc.classes, &cc.values)?);
    out.add("weights.csv", matrix_bytes(&wm.classes, &wm.values)?);
    out.add("penalty.csv", matrix_bytes(&pm.classes, &pm.values)?);
    out.add_json(
        "penalty.json",
        &serde_json::json!({
            "classes": pm.classes,
            "counts": cc.values,
            "weights": wm.values,
            "penalty": pm.values,
            "row_sums": row_sum_weights(&pm),
        }),
    )?;
    Ok(out)
}

fn train_cmd(a: &TrainArgs) -> Result<Produced> {
    let features = FeatureTable::load(&a.features)?;
    let labels = FeatureTable::load(&a.labels)?;
    let classes = labels.columns.clone();
    EmotionClassSet::new(classes.clone())?;
    let penalty = match &a.penalty {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let (pc, values) = read_matrix_csv(file)?;
            if pc != classes {
                return Err(Error::InvalidArgument(format!(
                    "penalty classes {pc:?} differ from label classes {classes:?}"
                )));
            }
            Some(PenaltyMatrix::from_array(pc, values)?)
        }
        None if a.alpha != 0.0 => {
            return Err(Error::InvalidArgument("--alpha > 0 requires --penalty".into()));
        }
        None => None,
    };
    let keep = a.ids.as_deref().map(read_id_list).transpose()?;
    let ids: Vec<String> = labels
        .ids
        .iter()
        .filter(|id| keep.as_ref().is_none_or(|k| k.contains(*id)))
        .cloned()
        .collect();
    if ids.is_empty() {
        return Err(Error::InvalidArgument("no labelled utterances to train on".into()));
    }
    let x = features.select(&ids)?;
    let y = labels.select(&ids)?;
    let cfg = TrainConfig {
        loss: a.loss,
        head: a.loss.default_head(),
        alpha: a.alpha,
        beta: a.beta,
        penalty,
        hidden: parse_hidden(&a.hidden)?,
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        patience: a.patience,
        momentum: a.momentum,
        dev_fraction: a.dev_fraction,
    };
    let outcome = train(x.view(), y.view(), &cfg)?;
    let trace = csv_bytes(&["epoch", "train_base", "train_penalty", "train_total", "dev_total"], |w| {
        for r in &outcome.trace {
            let dev = r.dev.map_or_else(String::new, |d| d.total.to_string());
            w.write_record([
                r.epoch.to_string(),
                r.train.base.to_string(),
                r.train.penalty.to_string(),
                r.train.total.to_string(),
                dev,
            ])?;
        }
        Ok(())
    })?;
    let ckpt = Checkpoint {
        classes,
        params: outcome.params,
        config: cfg,
        best_epoch: outcome.best_epoch,
    };
    let mut out = Produced::default();
    out.stdout = format!("trained on {} utterances; best epoch {}\n", ids.len(), ckpt.best_epoch);
    out.add_json("model.json", &ckpt)?;
    out.add("trace.csv", trace);
    Ok(out)
}

fn macro_f1_on(truth: &Array2<f64>, pred: &Array2<f64>, idx: &[usize], threshold: f64) -> Result<f64> {
    let t = truth.select(ndarray::Axis(0), idx);
    let p = pred.select(ndarray::Axis(0), idx);
    Ok(f1_scores(binarize(t.view(), threshold).view(), binarize(p.view(), threshold).view())?.macro_f1)
}

fn load_checkpoint(path: &Path, classes: &[String]) -> Result<Network> {
    let ckpt: Checkpoint = load_json(path)?;
    if ckpt.classes != classes {
        return Err(Error::InvalidArgument(format!(
            "model classes {:?} differ from corpus classes {classes:?}",
            ckpt.classes
        )));
    }
    Ok(ckpt.params)
}

fn evaluate(a: &EvaluateArgs) -> Result<Produced> {
    let corpus = a.input.load()?;
    let classes = corpus.class_set.names().to_vec();
    let net = load_checkpoint(&a.model, &classes)?;
    let features = FeatureTable::load(&a.features)?;
    let mut test = a.test_rule.select(&corpus);
    if let Some(path) = &a.ids {
        let keep = read_id_list(path)?;
        test.retain(|id| keep.contains(id));
    }
    let truth_rule = match a.test_rule {
        TestSet::Mr => Rule::Mr,
        TestSet::Pr => Rule::Pr,
        _ => Rule::Ar,
    };
    let subset = corpus.filter_ids(test.iter().map(String::as_str));
    let labels = encode_corpus(
        &subset,
        &EncodeConfig {
            kind: a.truth_kind,
            rule: truth_rule,
            seed: a.seed,
            ..EncodeConfig::default()
        },
    )?;
    let c = classes.len();
    let ids: Vec<String> = labels.iter().map(|(id, _)| id.clone()).collect();
    let truth = Array2::from_shape_vec(
        (ids.len(), c),
        labels.iter().flat_map(|(_, v)| v.values.iter().copied()).collect(),
    )
    .expect("row-major labels");
    let x = features.select(&ids)?;
    if x.ncols() != net.input_dim() {
        return Err(Error::shape(format!("{} feature columns", net.input_dim()), x.ncols()));
    }
    let pred = if ids.is_empty() { Array2::zeros((0, c)) } else { net.predict(x.view())? };
    let threshold = a.threshold.resolve(c);
    let label = a.test_rule.to_string();
    let mut report = EvalReport::compute(&label, &a.truth_kind.to_string(), truth.view(), pred.view(), threshold)?;
    if let Some(path) = &a.compare {
        let other = load_checkpoint(path, &classes)?;
        if ids.len() >= a.folds && a.folds >= 2 {
            let pred_b = other.predict(x.view())?;
            report.significance = Some(fold_split_metric_ttest(
                ids.len(),
                a.folds,
                a.seed,
                |idx| macro_f1_on(&truth, &pred, idx, threshold),
                |idx| macro_f1_on(&truth, &pred_b, idx, threshold),
            )?);
        } else {
            log::warn!("test set of {} utterances is too small for {} folds; skipping significance", ids.len(), a.folds);
        }
    }
    let mut out = Produced::default();
    let mut table = eval_table(std::slice::from_ref(&report));
    if ids.is_empty() {
        table.push_str(&format!("test set {label} is empty\n"));
    }
    if let Some(s) = &report.significance {
        table.push_str(&format!(
            "fold-split t-test: mean {:.4} vs {:.4}, t = {:.4}, p = {:.4}\n",
            s.mean_a, s.mean_b, s.test.t, s.test.p_value
        ));
    }
    out.add_json("report.json", &report)?;
    out.add("report.txt", table.clone().into_bytes());
    out.add("predictions.csv", FeatureTable::new(ids, classes, pred)?.to_bytes(None)?);
    out.stdout = table;
    Ok(out)
}

fn synth(a: &SynthArgs) -> Result<Produced> {
    let cfg = match &a.config {
        Some(path) => load_json::<SynthConfig>(path)?,
        None => {
            let classes: Vec<String> = EmotionClassSet::parse(&a.classes)?.names().to_vec();
            let refs: Vec<&str> = classes.iter().map(String::as_str).collect();
            let mut cfg = SynthConfig::simple(&refs, a.n, a.raters, a.accuracy, a.coverage, a.seed);
            if a.ambiguity > 0.0 {
                cfg.ambiguity = Some(Ambiguity {
                    rate: a.ambiguity,
                    weight: a.mix_weight,
                });
            }
            cfg.features = FeatureModel {
                dim: a.dim,
                separation: a.separation,
                noise_std: a.noise,
            };
            cfg.sessions = a.sessions;
            cfg
        }
    };
    let generated = generate(&cfg)?;
    let mut out = Produced::default();
    let mut buf = Vec::new();
    write_annotations(&generated.corpus, &mut buf)?;
    out.add("corpus.csv", buf);
    out.add("features.csv", generated.features.to_bytes(None)?);
    out.add_json("truth.json", &generated.truth_json())?;
    out.add_json("config.json", &cfg)?;
    out.stdout = format!(
        "{} utterances, {} ratings\n",
        generated.corpus.len(),
        generated.corpus.total_ratings()
    );
    Ok(out)
}

fn report(a: &ReportArgs) -> Result<Produced> {
    if a.corpus.is_none() && a.reports.is_empty() {
        return Err(Error::InvalidArgument("report needs --corpus or --reports".into()));
    }
    let mut text = String::new();
    let mut json = serde_json::Map::new();
    if let (Some(path), Some(classes)) = (&a.corpus, &a.classes) {
        let corpus = CorpusArgs {
            corpus: path.clone(),
            classes: classes.clone(),
        }
        .load()?;
        let losses: Vec<_> = Rule::ALL.iter().map(|&r| loss_report(&corpus, r)).collect();
        text.push_str(&loss_table(&corpus.name, &losses));
        let sizes: BTreeMap<String, usize> =
            TestSet::ALL.iter().map(|t| (t.to_string(), t.select(&corpus).len())).collect();
        text.push('\n');
        for (name, n) in &sizes {
            text.push_str(&format!("{name:<6} {n:>8} utterances\n"));
        }
        json.insert("loss".into(), serde_json::to_value(&losses)?);
        json.insert("test_set_sizes".into(), serde_json::to_value(&sizes)?);
    }
    if !a.reports.is_empty() {
        let reports = a.reports.iter().map(|p| load_json::<EvalReport>(p)).collect::<Result<Vec<_>>>()?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&eval_table(&reports));
        json.insert("evaluations".into(), serde_json::to_value(&reports)?);
    }
    let mut out = Produced::default();
    out.add("summary.txt", text.clone().into_bytes());
    out.add_json("summary.json", &json)?;
    out.stdout = text;
    Ok(out)
}

fn produce(cmd: &Command) -> Result<Produced> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Partition(a) => partition(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Encode(a) => encode(a),
        Command::Penalty(a) => penalty(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => report(a),
        Command::Replay(_) => unreachable!("replay is dispatched before produce"),
    }
}

/// Runs a (non-replay) command and writes its outputs and manifest.
pub fn run_command(mut cmd: Command, argv: Vec<String>) -> Result<RunManifest> {
    cmd.absolutize()?;
    let produced = produce(&cmd)?;
    let out_dir = cmd.out_mut().expect("non-replay command").clone();
    let mut outputs = BTreeMap::new();
    for (name, bytes) in &produced.files {
        write_atomic(out_dir.join(name), bytes)?;
        outputs.insert(name.clone(), sha256_hex(bytes));
    }
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: cmd.name().to_string(),
        argv,
        seed: cmd.seed(),
        inputs: cmd.inputs_mut().into_iter().map(|p| p.clone()).collect(),
        out: out_dir.clone(),
        outputs,
        config: serde_json::to_value(&cmd)?,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_atomic(out_dir.join(MANIFEST_FILE), &bytes)?;
    print!("{}", produced.stdout);
    Ok(manifest)
}

/// Re-executes a manifest, optionally into another directory, and checks
/// every output against the recorded digest.
pub fn replay(manifest_path: &Path, out: Option<PathBuf>) -> Result<RunManifest> {
    let recorded: RunManifest = load_json(manifest_path)?;
    if recorded.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::InvalidArgument(format!(
            "manifest schema version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
            recorded.schema_version
        )));
    }
    let mut cmd: Command = serde_json::from_value(recorded.config.clone())?;
    if let (Some(dir), Some(slot)) = (out, cmd.out_mut()) {
        *slot = dir;
    }
    let fresh = run_command(cmd, recorded.argv.clone())?;
    let mismatched: Vec<&String> = recorded
        .outputs
        .iter()
        .filter(|(name, digest)| fresh.outputs.get(*name) != Some(digest))
        .map(|(name, _)| name)
        .collect();
    if !mismatched.is_empty() || fresh.outputs.len() != recorded.outputs.len() {
        return Err(Error::ReplayMismatch(format!("outputs differ from the manifest: {mismatched:?}")));
    }
    Ok(fresh)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match cli.command {
        Command::Replay(r) => replay(&r.manifest, r.out).map(|_| ()),
        cmd => run_command(cmd, argv).map(|_| ()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}
