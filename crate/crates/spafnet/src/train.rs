//! Self-supervised training: Adam on the physics-consistency loss of
//! measured hologram stacks. Ground-truth objects are not part of the API.

use holo_core::cfld;
use holo_core::loss::{LossReport, LossWeights};
use holo_core::optim::{Adam, LrSchedule, DEFAULT_LR};
use holo_core::synth::derive_seed;
use holo_core::HologramStack;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SpafConfig;
use crate::error::{Result, SpafError};
use crate::net::{loss_and_gradients, loss_only, SpafWeights};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub loss: LossWeights,
    /// Fraction of stacks held out for model selection (at least one when
    /// two or more stacks are given).
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            lr: DEFAULT_LR,
            lr_schedule: LrSchedule::CosineAnnealing,
            loss: LossWeights::default(),
            val_fraction: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(SpafError::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(SpafError::Config(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(SpafError::Config(format!(
                "val_fraction must be in [0, 1), got {}",
                self.val_fraction
            )));
        }
        self.loss.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    /// Mean over the batch.
    pub loss: LossReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub train_count: usize,
    pub val_count: usize,
    /// Mean validation loss of the initial weights.
    pub initial_val_loss: f64,
    pub batches: Vec<BatchLog>,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights were kept; 0 means the initialization.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub weights: SpafWeights<T>,
    pub log: TrainLog,
    /// SHA-256 over configurations and training stacks.
    pub fingerprint: String,
}

/// Progress notifications emitted during training.
#[derive(Debug, Clone)]
pub enum TrainEvent<'a> {
    Batch(&'a BatchLog),
    Epoch(&'a EpochLog),
}

fn mean_report(reports: &[LossReport], w: &LossWeights) -> LossReport {
    let k = reports.len() as f64;
    let fd = reports.iter().map(|r| r.fdmae).sum::<f64>() / k;
    let ms = reports.iter().map(|r| r.mse).sum::<f64>() / k;
    let tv = reports.iter().map(|r| r.tv).sum::<f64>() / k;
    LossReport::combine(fd, ms, tv, w)
}

fn validation_loss<T: Real>(
    val: &[HologramStack],
    w: &SpafWeights<T>,
    cfg: &SpafConfig,
    lw: &LossWeights,
) -> Result<f64> {
    let totals = val
        .par_iter()
        .map(|s| loss_only(s, w, cfg, lw).map(|r| r.total))
        .collect::<Result<Vec<_>>>()?;
    Ok(totals.iter().sum::<f64>() / totals.len() as f64)
}

pub fn fingerprint(stacks: &[HologramStack], cfg: &SpafConfig, tc: &TrainConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg)?);
    h.update(serde_json::to_vec(tc)?);
    for s in stacks {
        h.update(cfld::stack_to_bytes(s));
    }
    Ok(hex::encode(h.finalize()))
}

/// Split off the validation tail and train.
pub fn train<T: Real>(
    stacks: &[HologramStack],
    cfg: &SpafConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_observed(stacks, cfg, tc, |_| {})
}

pub fn train_observed<T: Real, F>(
    stacks: &[HologramStack],
    cfg: &SpafConfig,
    tc: &TrainConfig,
    observer: F,
) -> Result<TrainOutcome<T>>
where
    F: FnMut(TrainEvent<'_>),
{
    if stacks.is_empty() {
        return Err(SpafError::EmptyDataset);
    }
    tc.validate()?;
    let n_val = if stacks.len() >= 2 {
        ((stacks.len() as f64 * tc.val_fraction).round() as usize).clamp(1, stacks.len() - 1)
    } else {
        0
    };
    let (train_set, val_set) = stacks.split_at(stacks.len() - n_val);
    let val_set = if val_set.is_empty() {
        train_set
    } else {
        val_set
    };
    let mut out = train_split(train_set, val_set, cfg, tc, observer)?;
    out.log.val_count = n_val;
    out.fingerprint = fingerprint(stacks, cfg, tc)?;
    Ok(out)
}

/// Train on `train_set`, keeping the weights with the lowest mean loss on `val_set`.
pub fn train_split<T: Real, F>(
    train_set: &[HologramStack],
    val_set: &[HologramStack],
    cfg: &SpafConfig,
    tc: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome<T>>
where
    F: FnMut(TrainEvent<'_>),
{
    if train_set.is_empty() || val_set.is_empty() {
        return Err(SpafError::EmptyDataset);
    }
    cfg.validate()?;
    tc.validate()?;
    let mut weights = SpafWeights::<T>::init(cfg, derive_seed(tc.seed, 0))?;
    let mut params = weights.to_flat();
    let mut adam = Adam::<T>::new(params.len());

    let initial_val_loss = validation_loss(val_set, &weights, cfg, &tc.loss)?;
    let mut best = (initial_val_loss, weights.clone(), 0usize);

    let batches_per_epoch = train_set.len().div_ceil(tc.batch_size);
    let total_steps = tc.epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog {
        train_count: train_set.len(),
        val_count: val_set.len(),
        initial_val_loss,
        batches: Vec::with_capacity(total_steps),
        epochs: Vec::with_capacity(tc.epochs),
        best_epoch: 0,
        best_val_loss: initial_val_loss,
    };

    let mut step = 0;
    for epoch in 1..=tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            // per-sample passes run in parallel; reduction is in batch order
            let results = chunk
                .par_iter()
                .map(|&i| loss_and_gradients(&train_set[i], &weights, cfg, &tc.loss))
                .collect::<Result<Vec<_>>>()?;
            let scale = T::one() / T::of(chunk.len() as f64);
            let mut grad = vec![T::zero(); params.len()];
            let mut reports = Vec::with_capacity(chunk.len());
            for (r, g) in results {
                reports.push(r);
                for (acc, v) in grad.iter_mut().zip(g.to_flat()) {
                    *acc += v * scale;
                }
            }
            let lr = tc.lr_schedule.lr_at(tc.lr, step, total_steps);
            adam.step(&mut params, &grad, T::of(lr));
            weights = SpafWeights::from_flat(cfg, &params)?;
            if !weights.is_finite() {
                return Err(SpafError::NonFinite("weights after update"));
            }
            let entry = BatchLog {
                epoch,
                step,
                lr,
                loss: mean_report(&reports, &tc.loss),
            };
            epoch_sum += entry.loss.total * chunk.len() as f64;
            observer(TrainEvent::Batch(&entry));
            log.batches.push(entry);
            step += 1;
        }
        let val_loss = validation_loss(val_set, &weights, cfg, &tc.loss)?;
        let e = EpochLog {
            epoch,
            train_loss: epoch_sum / train_set.len() as f64,
            val_loss,
        };
        observer(TrainEvent::Epoch(&e));
        log.epochs.push(e);
        if val_loss < best.0 {
            best = (val_loss, weights.clone(), epoch);
        }
    }
    log.best_epoch = best.2;
    log.best_val_loss = best.0;
    Ok(TrainOutcome {
        weights: best.1,
        log,
        fingerprint: String::new(),
    })
}
