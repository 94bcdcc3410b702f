//! Desk-scale reference classifier: a small feed-forward network trained by
//! mini-batch gradient descent on any objective from [`crate::losses`], and a
//! per-rater ensemble fused through a linear head over the members'
//! penultimate activations.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::encoding::alpha_soft;
use crate::error::{Error, Result};
use crate::io::FeatureTable;
use crate::losses::{activate, Head, LossKind, LossValue, Objective};
use crate::cooccurrence::PenaltyMatrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// in × out
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut rng::Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        Self {
            weights: Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

/// Stack of dense layers with rectified activations between them and an
/// output head after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
    pub head: Head,
}

impl Network {
    /// `sizes = [d, h1, ..., C]`, Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], head: Head, seed: u64) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let mut rng = rng::seeded(seed);
        Self {
            layers: sizes.windows(2).map(|w| Dense::init(w[0], w[1], &mut rng)).collect(),
            head,
        }
    }

    pub fn zeros(sizes: &[usize], head: Head) -> Self {
        Self {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    weights: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
            head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!("{} features", self.input_dim()), x.ncols()));
        }
        Ok(())
    }

    /// Activations of every layer: input, each hidden (post-ReLU), scores.
    fn forward_all(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(acts[k].view());
            if k + 1 < self.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.forward_all(x).pop().unwrap())
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(activate(self.scores(x)?.view(), self.head))
    }

    /// Activations feeding the output layer.
    pub fn penultimate(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut acts = self.forward_all(x);
        acts.pop();
        Ok(acts.pop().unwrap())
    }

    /// Parameter gradients given dLoss/dScores.
    fn backward(&self, acts: &[Array2<f64>], grad_scores: Array2<f64>) -> Vec<(Array2<f64>, Array1<f64>)> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_scores;
        for k in (0..self.layers.len()).rev() {
            let input = &acts[k];
            grads.push((input.t().dot(&delta), delta.sum_axis(Axis(0))));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weights.t());
                back.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        grads
    }
}

/// Predictions of a network on a feature matrix.
pub fn predict(params: &Network, features: ArrayView2<f64>) -> Result<Array2<f64>> {
    params.predict(features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub head: Head,
    pub alpha: f64,
    pub beta: f64,
    pub penalty: Option<PenaltyMatrix>,
    /// Hidden layer widths; empty for a linear model.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without dev-loss improvement.
    pub patience: Option<usize>,
    pub momentum: f64,
    /// Share of training rows carved out as a dev set when none is supplied.
    pub dev_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Ce,
            head: Head::Softmax,
            alpha: 0.0,
            beta: 1.0,
            penalty: None,
            hidden: vec![16],
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            patience: None,
            momentum: 0.0,
            dev_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> Objective {
        Objective {
            kind: self.loss,
            head: self.head,
            alpha: self.alpha,
            beta: self.beta,
            penalty: self.penalty.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::InvalidArgument("objective is identically zero (alpha = beta = 0)".into()));
        }
        if self.loss.default_head() != self.head {
            return Err(Error::InvalidArgument(format!("loss {} requires the {:?} head", self.loss, self.loss.default_head())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossValue,
    pub dev: Option<LossValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: Network,
    pub trace: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

fn rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// Trains on `features`/`targets`, carving `dev_fraction` of the rows out as
/// a dev set.
pub fn train(features: ArrayView2<f64>, targets: ArrayView2<f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if features.nrows() != targets.nrows() {
        return Err(Error::shape(features.nrows(), targets.nrows()));
    }
    let n = features.nrows();
    let n_dev = (cfg.dev_fraction * n as f64).round() as usize;
    if n_dev == 0 || n_dev >= n {
        return train_with_dev(features, targets, None, cfg);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::keyed(cfg.seed, "dev-split"));
    let (dev_idx, train_idx) = order.split_at(n_dev);
    let (mut dev_idx, mut train_idx) = (dev_idx.to_vec(), train_idx.to_vec());
    dev_idx.sort_unstable();
    train_idx.sort_unstable();
    let (dx, dy) = (rows(features, &dev_idx), rows(targets, &dev_idx));
    train_with_dev(
        rows(features, &train_idx).view(),
        rows(targets, &train_idx).view(),
        Some((dx.view(), dy.view())),
        cfg,
    )
}

/// Batch index 0 marks the end-of-epoch evaluation.
fn checked_loss(objective: &Objective, y: ArrayView2<f64>, yp: ArrayView2<f64>, epoch: usize, batch: usize) -> Result<LossValue> {
    let diverged = |loss| Error::Diverged { epoch, batch, loss };
    if yp.iter().any(|v| !v.is_finite()) {
        return Err(diverged(f64::NAN));
    }
    let loss = objective.value_from_predictions(y, yp)?;
    if !loss.total.is_finite() {
        return Err(diverged(loss.total));
    }
    Ok(loss)
}

/// Trains with an explicit (optional) dev set. Returns the parameters with
/// the lowest dev loss, or the last epoch's when there is no dev set.
pub fn train_with_dev(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    dev: Option<(ArrayView2<f64>, ArrayView2<f64>)>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if x.nrows() != y.nrows() || x.nrows() == 0 {
        return Err(Error::shape(format!("{} target rows", x.nrows()), y.nrows()));
    }
    let (d, c) = (x.ncols(), y.ncols());
    let objective = cfg.objective();
    if let Some(p) = &cfg.penalty {
        if p.num_classes() != c {
            return Err(Error::shape(format!("{c}x{c} penalty"), p.num_classes()));
        }
    }
    let mut sizes = vec![d];
    sizes.extend(&cfg.hidden);
    sizes.push(c);
    let mut net = Network::init(&sizes, cfg.head, cfg.seed);
    let mut velocity: Vec<(Array2<f64>, Array1<f64>)> = net
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
        .collect();
    let mut shuffler = rng::keyed(cfg.seed, "batches");
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffler);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let bx = rows(x, chunk);
            let by = rows(y, chunk);
            let acts = net.forward_all(bx.view());
            let scores = acts.last().unwrap();
            let yp = activate(scores.view(), cfg.head);
            checked_loss(&objective, by.view(), yp.view(), epoch, b + 1)?;
            let g = objective.gradient_from_predictions(by.view(), yp.view());
            let grads = net.backward(&acts, g);
            for ((layer, (gw, gb)), (vw, vb)) in net.layers.iter_mut().zip(grads).zip(velocity.iter_mut()) {
                if cfg.momentum == 0.0 {
                    layer.weights.scaled_add(-cfg.learning_rate, &gw);
                    layer.bias.scaled_add(-cfg.learning_rate, &gb);
                } else {
                    *vw = &*vw * cfg.momentum - &(gw * cfg.learning_rate);
                    *vb = &*vb * cfg.momentum - &(gb * cfg.learning_rate);
                    layer.weights += &*vw;
                    layer.bias += &*vb;
                }
            }
        }
        let train_loss = checked_loss(&objective, y, net.predict(x)?.view(), epoch, 0)?;
        let dev_loss = match dev {
            Some((dx, dy)) => Some(checked_loss(&objective, dy, net.predict(dx)?.view(), epoch, 0)?),
            None => None,
        };
        trace.push(EpochRecord {
            epoch,
            train: train_loss,
            dev: dev_loss,
        });
        let Some(dl) = dev_loss else { continue };
        match &best {
            Some((b, _, _)) if dl.total >= *b => {}
            _ => best = Some((dl.total, epoch, net.clone())),
        }
        if let (Some(p), Some((_, be, _))) = (cfg.patience, &best) {
            if epoch - be >= p {
                break;
            }
        }
    }
    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (trace.len(), net),
    };
    Ok(TrainOutcome {
        params,
        trace,
        best_epoch,
    })
}

/// Model checkpoint as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub classes: Vec<String>,
    pub params: Network,
    pub config: TrainConfig,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub member: TrainConfig,
    pub fusion: TrainConfig,
    /// Pseudo-count for the per-rater soft labels.
    pub alpha_soft: f64,
    pub min_samples: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            member: TrainConfig {
                loss: LossKind::Kld,
                ..TrainConfig::default()
            },
            fusion: TrainConfig {
                loss: LossKind::Kld,
                hidden: Vec::new(),
                ..TrainConfig::default()
            },
            alpha_soft: crate::encoding::DEFAULT_ALPHA,
            min_samples: 20,
        }
    }
}

/// Frozen per-rater networks plus a fusion head over their concatenated
/// penultimate activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterEnsemble {
    pub raters: Vec<String>,
    pub members: Vec<Network>,
    pub fusion: Network,
    pub skipped: Vec<String>,
}

impl RaterEnsemble {
    pub fn fused_representation(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let parts = self
            .members
            .iter()
            .map(|m| m.penultimate(x))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        concatenate(Axis(1), &views).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.fusion.predict(self.fused_representation(x)?.view())
    }
}

fn soft_targets(corpus: &Corpus, features: &FeatureTable, alpha: f64) -> Result<(Vec<usize>, Array2<f64>)> {
    let c = corpus.num_classes();
    let mut idx = Vec::new();
    let mut y = Vec::new();
    for (u, vc) in corpus.utterances().iter().zip(corpus.vote_counts()) {
        if vc.total_in_set == 0 {
            continue;
        }
        let Some(row) = features.row_of(&u.id) else { continue };
        idx.push(row);
        y.extend(alpha_soft(&vc, alpha)?.values);
    }
    let n = idx.len();
    Ok((idx, Array2::from_shape_vec((n, c), y).expect("row-major soft labels")))
}

/// Trains one network per rater on that rater's soft labels, freezes them,
/// then trains the fusion head on the whole corpus's soft labels.
pub fn train_rater_ensemble(corpus: &Corpus, features: &FeatureTable, rater_ids: &[String], cfg: &EnsembleConfig) -> Result<RaterEnsemble> {
    let mut raters = Vec::new();
    let mut members = Vec::new();
    let mut skipped = Vec::new();
    for rater in rater_ids {
        let view = corpus.per_rater_view(rater)?;
        let (idx, y) = soft_targets(&view, features, cfg.alpha_soft)?;
        if idx.len() < cfg.min_samples {
            log::warn!("skipping rater {rater}: {} samples < {}", idx.len(), cfg.min_samples);
            skipped.push(rater.clone());
            continue;
        }
        let x = features.values.select(Axis(0), &idx);
        let out = train(x.view(), y.view(), &cfg.member)?;
        raters.push(rater.clone());
        members.push(out.params);
    }
    if members.is_empty() {
        return Err(Error::InvalidArgument("no rater has enough samples for an ensemble".into()));
    }
    let mut ens = RaterEnsemble {
        raters,
        members,
        fusion: Network::zeros(&[1, corpus.num_classes()], cfg.fusion.head),
        skipped,
    };
    let (idx, y) = soft_targets(corpus, features, cfg.alpha_soft)?;
    let x = features.values.select(Axis(0), &idx);
    let rep = ens.fused_representation(x.view())?;
    ens.fusion = train(rep.view(), y.view(), &cfg.fusion)?.params;
    Ok(ens)
}

/// Rows of `m` at positions `idx`; exposed for callers assembling batches.
pub fn select_rows(m: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    rows(m, idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_network_predicts_uniform() {
        let net = Network::zeros(&[3, 4, 5], Head::Softmax);
        let p = net.predict(array![[1.0, -2.0, 0.5], [0.0, 0.0, 9.0]].view()).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn hand_evaluated_network() {
        let net = Network {
            layers: vec![
                Dense {
                    weights: array![[1.0, -1.0], [0.5, 2.0]],
                    bias: array![0.0, 0.5],
                },
                Dense {
                    weights: array![[1.0, 0.0], [0.0, 1.0]],
                    bias: array![0.0, -1.0],
                },
            ],
            head: Head::Softmax,
        };
        // x = (2, 1): hidden pre = (2.5, 0.5) -> relu same; scores = (2.5, -0.5)
        let p = net.predict(array![[2.0, 1.0]].view()).unwrap();
        let e = (3.0f64).exp();
        assert!((p[[0, 0]] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[[0, 1]] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!(net.predict(array![[1.0, 2.0, 3.0]].view()).is_err());
    }

    #[test]
    fn degenerate_objective_is_rejected() {
        let cfg = TrainConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        let x = array![[0.0], [1.0]];
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(train(x.view(), y.view(), &cfg).is_err());
        let bad_head = TrainConfig {
            loss: LossKind::Bce,
            head: Head::Softmax,
            ..Default::default()
        };
        assert!(train(x.view(), y.view(), &bad_head).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            learning_rate: 1e200,
            hidden: vec![],
            epochs: 5,
            dev_fraction: 0.0,
            ..Default::default()
        };
        let x = array![[1e200], [-1e200], [2e200]];
        let y = array![[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        match train(x.view(), y.view(), &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
