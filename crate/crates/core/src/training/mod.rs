//! Losses, learning-rate scheduling with early stopping, and the AdamW
//! training loop.

mod data;
mod scheduler;

use std::path::Path;
use std::time::Instant;

use autograd::{AdamW, AdamWConfig, Graph, ParamStore, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{AugmentPolicy, N_POLY_CLASSES};
use crate::error::{invalid, Error, Result};
use crate::models::{Family, Mode, Model, ModelOutput};

pub use data::{collate, Batch, PatchDataset};
pub use scheduler::{EpochDecision, PlateauScheduler};

pub const POLY_LOSS_WEIGHT: f64 = 0.04;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// `None` picks the model's default rate.
    pub initial_lr: Option<f64>,
    pub plateau_patience: usize,
    pub lr_factor: f64,
    pub early_stop_patience: usize,
    pub batches_per_epoch: usize,
    pub poly_loss_weight: f64,
    /// Minimum decrease of the validation loss that counts as improvement.
    pub improvement_tolerance: f64,
    pub adamw: AdamWSettings,
    pub augmentation: AugmentPolicy,
    /// Include the polyphony term in the PUnet validation loss.
    pub validation_includes_polyphony: bool,
    pub seed: u64,
    /// When off, fresh entropy is mixed into the seed so repeated runs differ.
    pub deterministic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWSettings {
    fn default() -> Self {
        let c = AdamWConfig::default();
        Self { beta1: c.beta1, beta2: c.beta2, eps: c.eps, weight_decay: c.weight_decay }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 25,
            max_epochs: 100,
            initial_lr: None,
            plateau_patience: 5,
            lr_factor: 0.5,
            early_stop_patience: 12,
            batches_per_epoch: 3800,
            poly_loss_weight: POLY_LOSS_WEIGHT,
            improvement_tolerance: 0.0,
            adamw: AdamWSettings::default(),
            augmentation: AugmentPolicy::default(),
            validation_includes_polyphony: true,
            seed: 0,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("plateau_patience", self.plateau_patience),
            ("early_stop_patience", self.early_stop_patience),
            ("batches_per_epoch", self.batches_per_epoch),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(invalid(format!("{name} must be positive")));
        }
        if self.seed > MAX_SEED {
            return Err(invalid(format!("seed must not exceed {MAX_SEED}")));
        }
        if self.initial_lr.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(invalid("initial_lr must be positive"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(invalid("lr_factor must be in (0, 1)"));
        }
        if !(self.poly_loss_weight >= 0.0 && self.improvement_tolerance >= 0.0) {
            return Err(invalid("poly_loss_weight and improvement_tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    /// Rate used during this epoch.
    pub learning_rate: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the lowest validation loss.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Seed requested in the config.
    pub seed: u64,
    /// Seed actually used for initialisation, data order, augmentation and
    /// dropout.
    pub effective_seed: u64,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format("train history", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
    }
}

/// Mean binary cross-entropy over all cells; predictions are clamped away
/// from 0 and 1 by 1e-12.
pub fn loss_mpe(pred: &[f32], target: &[u8]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape { expected: vec![target.len()], actual: vec![pred.len()] });
    }
    let eps = 1e-12;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = (p as f64).clamp(eps, 1.0 - eps);
            if t != 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// BCE plus `weight` times the polyphony cross-entropy when a polyphony
/// target is given.
pub fn loss_total(output: &ModelOutput, pitch_target: &[u8], poly_target: Option<&[u8]>, weight: f64) -> Result<f64> {
    let bce = loss_mpe(&output.pitch_activity, pitch_target)?;
    let Some(classes) = poly_target else { return Ok(bce) };
    let logits = output
        .polyphony_logits
        .as_ref()
        .ok_or_else(|| invalid("a polyphony target was given but the model has no polyphony head"))?;
    if classes.len() != output.batch || logits.len() != output.batch * N_POLY_CLASSES {
        return Err(Error::Shape { expected: vec![output.batch], actual: vec![classes.len()] });
    }
    let mut ce = 0.0;
    for (row, &c) in logits.chunks(N_POLY_CLASSES).zip(classes) {
        let m = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
        let lse = m + row.iter().map(|&v| (v as f64 - m).exp()).sum::<f64>().ln();
        ce += lse - row[c as usize] as f64;
    }
    Ok(bce + weight * ce / output.batch as f64)
}

/// The training objective on graph outputs.
pub fn graph_loss<'g, F: autograd::Float>(
    pitch_logits: Var<'g, F>,
    polyphony_logits: Option<Var<'g, F>>,
    batch: &Batch<F>,
    poly_weight: f64,
) -> Var<'g, F> {
    let bce = pitch_logits.bce_with_logits(&batch.pitch_targets);
    match polyphony_logits {
        Some(p) if poly_weight > 0.0 => bce.add(p.cross_entropy(&batch.polyphony_targets).scale(poly_weight)),
        _ => bce,
    }
}

/// An optimisation target driven by [`run_schedule`].
pub trait Learner {
    type Snapshot;

    /// Runs one epoch at `lr` and returns the mean training loss.
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64>;
    fn validation_loss(&mut self) -> Result<f64>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: Self::Snapshot) -> Result<()>;
}

/// Epoch loop with plateau halving and early stopping. Leaves the learner
/// holding the weights of the best validation epoch.
pub fn run_schedule<L: Learner>(learner: &mut L, config: &TrainConfig, initial_lr: f64) -> Result<TrainHistory> {
    config.validate()?;
    let mut scheduler = PlateauScheduler::new(
        initial_lr,
        config.lr_factor,
        config.plateau_patience,
        config.early_stop_patience,
        config.improvement_tolerance,
    );
    let mut epochs = Vec::new();
    let mut best = None;
    let mut stopped_early = false;
    for epoch in 0..config.max_epochs {
        let start = Instant::now();
        let lr = scheduler.lr();
        let train_loss = learner.train_epoch(epoch, lr)?;
        let validation_loss = learner.validation_loss()?;
        if !validation_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0, lr });
        }
        let decision = scheduler.observe(validation_loss);
        if decision.improved {
            best = Some(learner.snapshot());
        }
        epochs.push(EpochRecord { epoch, train_loss, validation_loss, learning_rate: lr, wall_seconds: start.elapsed().as_secs_f64() });
        log::info!(
            "epoch {epoch}: train {train_loss:.5} val {validation_loss:.5} lr {lr:.2e}{}{}",
            if decision.improved { " *" } else { "" },
            if decision.lr_reduced { " (lr halved)" } else { "" }
        );
        if decision.stop {
            stopped_early = true;
            break;
        }
    }
    let (best_epoch, _) = scheduler.best().expect("at least one epoch ran");
    learner.restore(best.expect("the first epoch always improves"))?;
    Ok(TrainHistory { epochs, best_epoch, stopped_early, seed: config.seed, effective_seed: config.seed })
}

/// Mixes fresh entropy into `seed` unless determinism is requested.
/// Largest seed accepted anywhere, so seeds survive formats limited to
/// signed 64-bit integers.
pub const MAX_SEED: u64 = i64::MAX as u64;

pub fn effective_seed(config: &TrainConfig) -> u64 {
    if config.deterministic {
        config.seed
    } else {
        (config.seed ^ rand::rng().random::<u64>()) & MAX_SEED
    }
}

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Init = 1,
    Order = 2,
    Augment = 3,
    Dropout = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// A model trained with AdamW on patch datasets.
pub struct ModelLearner<'a> {
    pub model: Model<f32>,
    optimizer: AdamW<f32>,
    train: &'a PatchDataset,
    validation: &'a PatchDataset,
    config: TrainConfig,
    order: Vec<usize>,
    cursor: usize,
    order_rng: ChaCha8Rng,
    augment_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
}

impl<'a> ModelLearner<'a> {
    pub fn new(model: Model<f32>, train: &'a PatchDataset, validation: &'a PatchDataset, config: &TrainConfig, seed: u64) -> Result<Self> {
        if train.is_empty() || validation.is_empty() {
            return Err(invalid("training and validation sets must not be empty"));
        }
        let a = config.adamw;
        let optimizer = AdamW::new(AdamWConfig { beta1: a.beta1, beta2: a.beta2, eps: a.eps, weight_decay: a.weight_decay });
        Ok(Self {
            model,
            optimizer,
            train,
            validation,
            config: config.clone(),
            order: Vec::new(),
            cursor: 0,
            order_rng: stream_rng(seed, Stream::Order),
            augment_rng: stream_rng(seed, Stream::Augment),
            dropout_rng: stream_rng(seed, Stream::Dropout),
        })
    }

    fn poly_weight(&self) -> f64 {
        if self.model.config().family == Family::PUnet {
            self.config.poly_loss_weight
        } else {
            0.0
        }
    }

    /// Next example index of the shuffled order, reshuffling after each pass.
    fn next_index(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order = (0..self.train.len()).collect();
            self.order.shuffle(&mut self.order_rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    /// One optimiser step on a batch; returns its loss.
    pub fn step(&mut self, epoch: usize, batch_index: usize, lr: f64) -> Result<f64> {
        let patches: Vec<_> = (0..self.config.batch_size)
            .map(|_| {
                let i = self.next_index();
                self.config.augmentation.apply(&self.train.get(i), &mut self.augment_rng)
            })
            .collect();
        let batch = collate::<f32>(&patches);
        let g = Graph::new();
        let x = g.constant(batch.inputs.clone());
        let out = self.model.forward_graph(&g, x, Mode::Train, &mut self.dropout_rng)?;
        let loss = graph_loss(out.pitch_logits, out.polyphony_logits, &batch, self.poly_weight());
        let value = loss.value().item() as f64;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: batch_index, lr });
        }
        let grads = g.backward(loss);
        let updates = g.take_updates();
        self.optimizer.step(self.model.store_mut(), &grads.into_params(), lr);
        self.model.store_mut().apply_updates(updates);
        Ok(value)
    }

    /// Loss over a whole dataset in evaluation mode without augmentation.
    pub fn dataset_loss(&self, data: &PatchDataset, include_polyphony: bool) -> Result<f64> {
        let weight = if include_polyphony { self.poly_weight() } else { 0.0 };
        let mut total = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for start in (0..data.len()).step_by(self.config.batch_size) {
            let end = (start + self.config.batch_size).min(data.len());
            let patches: Vec<_> = (start..end).map(|i| data.get(i)).collect();
            let batch = collate::<f32>(&patches);
            let g = Graph::new();
            let x = g.constant(batch.inputs.clone());
            let out = self.model.forward_graph(&g, x, Mode::Eval, &mut rng)?;
            let loss = graph_loss(out.pitch_logits, out.polyphony_logits, &batch, weight);
            total += loss.value().item() as f64 * (end - start) as f64;
        }
        Ok(total / data.len() as f64)
    }
}

impl Learner for ModelLearner<'_> {
    type Snapshot = ParamStore<f32>;

    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64> {
        let mut sum = 0.0;
        for b in 0..self.config.batches_per_epoch {
            sum += self.step(epoch, b, lr)?;
        }
        Ok(sum / self.config.batches_per_epoch as f64)
    }

    fn validation_loss(&mut self) -> Result<f64> {
        self.dataset_loss(self.validation, self.config.validation_includes_polyphony)
    }

    fn snapshot(&self) -> ParamStore<f32> {
        self.model.store().clone()
    }

    fn restore(&mut self, snapshot: ParamStore<f32>) -> Result<()> {
        self.model.restore(snapshot)
    }
}

/// Result of [`train`]: the best-epoch model, the history, and the weights
/// at the last epoch.
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub history: TrainHistory,
    pub final_params: ParamStore<f32>,
}

/// Trains a freshly initialised `model` configuration. The seed (see
/// [`effective_seed`]) drives initialisation, data order, augmentation and
/// dropout through separate streams.
pub fn train(
    config: &crate::models::ModelConfig,
    train_set: &PatchDataset,
    validation_set: &PatchDataset,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_config.validate()?;
    let seed = effective_seed(train_config);
    let init_seed = stream_rng(seed, Stream::Init).random::<u64>();
    let model = Model::<f32>::build(config, init_seed)?;
    let lr = train_config.initial_lr.unwrap_or_else(|| config.default_learning_rate());
    log::info!(
        "training {} ({} parameters) on {} examples, seed {seed}",
        config.family,
        model.num_params(),
        train_set.len()
    );
    let mut learner = ModelLearner::new(model, train_set, validation_set, train_config, seed)?;
    let mut final_params = None;
    let mut history = {
        struct Tracking<'l, 'a>(&'l mut ModelLearner<'a>, &'l mut Option<ParamStore<f32>>);
        impl Learner for Tracking<'_, '_> {
            type Snapshot = ParamStore<f32>;
            fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64> {
                self.0.train_epoch(epoch, lr)
            }
            fn validation_loss(&mut self) -> Result<f64> {
                let v = self.0.validation_loss()?;
                *self.1 = Some(self.0.snapshot());
                Ok(v)
            }
            fn snapshot(&self) -> ParamStore<f32> {
                self.0.snapshot()
            }
            fn restore(&mut self, s: ParamStore<f32>) -> Result<()> {
                self.0.restore(s)
            }
        }
        run_schedule(&mut Tracking(&mut learner, &mut final_params), train_config, lr)?
    };
    history.effective_seed = seed;
    Ok(TrainOutcome {
        model: learner.model,
        history,
        final_params: final_params.expect("at least one epoch ran"),
    })
}
