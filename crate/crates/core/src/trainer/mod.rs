//! Mini-batch training of the distance objective with the anti-collapse
//! regularizer.
//!
//! Every sample carries its own histories, so batches can be formed from any
//! subset of training events in any order. Per-sample gradients are computed
//! in parallel on shared read-only parameters and reduced in sample order.

mod adam;
mod loss;
mod source;

pub use adam::{Adam, AdamState};
pub use loss::{
    batch_gradients, batch_gradients_joint, batch_loss, pair_loss, pair_loss_value, sample_gradients, sample_loss,
    sample_losses, TrainSample,
};
pub use source::{mean_entity_gap, SampleSource, StaticSamples, TemporalSamples};

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Checkpoint period in epochs; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    /// Global gradient norm cap.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            learning_rate: 1e-3,
            epochs: 5,
            gamma: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            shuffle: true,
            checkpoint_every: 1,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("epsilon and clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> Adam {
        Adam { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

/// Training statistics of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub samples: usize,
    /// Samples dropped because a participant had no prior events.
    pub skipped: usize,
    pub seconds: f64,
}

/// Steps a model through epochs over a sample source.
pub struct Trainer<'a, S: SampleSource> {
    cfg: TrainConfig,
    source: &'a S,
    model: Model,
    adam: Adam,
    state: AdamState,
    epochs_done: usize,
}

impl<'a, S: SampleSource> Trainer<'a, S> {
    pub fn new(model: Model, source: &'a S, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if source.is_empty() {
            return Err(Error::Empty("training partition"));
        }
        let state = AdamState::new(model.params());
        Ok(Trainer { adam: cfg.adam(), cfg, source, model, state, epochs_done: 0 })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn optimizer_state(&self) -> &AdamState {
        &self.state
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn into_parts(self) -> (Model, AdamState) {
        (self.model, self.state)
    }

    /// The order in which epoch `epoch` (1-based) visits the samples: a seeded
    /// permutation when shuffling, index order otherwise.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.source.len()).collect();
        if self.cfg.shuffle {
            order.shuffle(&mut rng::rng_indexed(self.cfg.seed, "epoch-order", epoch as u64));
        }
        order
    }

    /// One pass over the training samples with one optimizer step per batch.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let start = Instant::now();
        let epoch = self.epochs_done + 1;
        let snapshot = self.model.clone();
        let diverged = |model: &Model| Error::Diverged { epoch, last_good: Box::new(model.clone()) };
        let order = self.epoch_order(epoch);
        let (mut loss_sum, mut samples, mut skipped) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(self.cfg.batch_size) {
            let source = self.source;
            let batch: Vec<TrainSample> = chunk
                .par_iter()
                .map(|&j| source.sample(epoch, j))
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect();
            skipped += chunk.len() - batch.len();
            if batch.is_empty() {
                continue;
            }
            let (loss, grads) = match batch_gradients(&self.model, &batch, self.cfg.gamma) {
                Ok(r) => r,
                Err(Error::NonFinite(_)) => return Err(diverged(&snapshot)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(diverged(&snapshot));
            }
            let params = self.model.params_mut();
            params.zero_grads();
            params.accumulate(&grads, 1.0)?;
            let norm = params.grad_norm();
            if !norm.is_finite() {
                return Err(diverged(&snapshot));
            }
            if norm > self.cfg.clip_norm {
                params.scale_grads(self.cfg.clip_norm / norm);
            }
            self.adam.step(params, &mut self.state);
            loss_sum += loss * batch.len() as f64;
            samples += batch.len();
        }
        if samples == 0 {
            return Err(Error::Empty("training samples with non-empty histories"));
        }
        if skipped > 0 {
            log::debug!("epoch {epoch}: skipped {skipped} samples with an empty history");
        }
        self.epochs_done = epoch;
        Ok(EpochStats {
            epoch,
            train_loss: loss_sum / samples as f64,
            samples,
            skipped,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Validation scores of one model. `score` drives best-epoch selection
/// (higher is better); the rest is reported.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Validation {
    pub score: f64,
    pub mrr: Option<f64>,
    pub recall_at_10: Option<f64>,
    pub ap: Option<f64>,
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_mrr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_recall10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_ap: Option<f64>,
    pub wall_seconds: f64,
}

/// What the epoch callback sees.
pub struct EpochReport<'r> {
    pub record: &'r EpochRecord,
    pub stats: &'r EpochStats,
    pub model: &'r Model,
    pub optimizer: &'r AdamState,
    /// Whether the checkpoint schedule asks for a checkpoint now.
    pub checkpoint_due: bool,
}

pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub model: Model,
    pub optimizer: AdamState,
    /// Parameters of the best validation epoch (the final ones without validation).
    pub best: Model,
    pub best_epoch: Option<usize>,
    pub records: Vec<EpochRecord>,
}

/// Runs `cfg.epochs` epochs, validating after each one and keeping the best
/// epoch's parameters. Zero epochs return the initial model unchanged.
pub fn train<S, V, C>(model: Model, source: &S, cfg: TrainConfig, mut validate: V, mut on_epoch: C) -> Result<TrainOutcome>
where
    S: SampleSource,
    V: FnMut(&Model) -> Result<Option<Validation>>,
    C: FnMut(EpochReport<'_>) -> Result<()>,
{
    let epochs = cfg.epochs;
    let every = cfg.checkpoint_every;
    let mut trainer = Trainer::new(model, source, cfg)?;
    let mut best: Option<(f64, usize, Model)> = None;
    let mut records = Vec::with_capacity(epochs);
    let start = Instant::now();
    for _ in 0..epochs {
        let stats = trainer.run_epoch()?;
        let val = validate(trainer.model())?;
        if let Some(v) = val {
            if best.as_ref().is_none_or(|(score, _, _)| v.score > *score) {
                best = Some((v.score, stats.epoch, trainer.model().clone()));
            }
        }
        let v = val.unwrap_or_default();
        let record = EpochRecord {
            epoch: stats.epoch,
            train_loss: stats.train_loss,
            val_mrr: v.mrr,
            val_recall10: v.recall_at_10,
            val_ap: v.ap,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(EpochReport {
            record: &record,
            stats: &stats,
            model: trainer.model(),
            optimizer: trainer.optimizer_state(),
            checkpoint_due: every > 0 && stats.epoch % every == 0,
        })?;
        records.push(record);
    }
    let (model, optimizer) = trainer.into_parts();
    let (best, best_epoch) = match best {
        Some((_, epoch, m)) => (m, Some(epoch)),
        None => (model.clone(), None),
    };
    Ok(TrainOutcome { model, optimizer, best, best_epoch, records })
}

#[cfg(test)]
mod tests;
