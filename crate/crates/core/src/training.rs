//! Two-phase training with Adam.
//!
//! Epochs `1..=N₀` fit only the backbone and intensity head on the
//! likelihood while the prediction heads stay frozen. Later epochs train all
//! parameters on the likelihood plus weighted head losses. The model with
//! the best validation likelihood is kept.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, CheckpointError};
use crate::events::{batchify, Dataset, EventSequence};
use crate::losses::{sequence_loss, BoundModel, LossError, LossWeights, Phase};
use crate::model::CoticModel;
use crate::ndarr::{Array, Graph, ParamGroup, ParamSet};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("non-finite gradient for parameter {0:?}; step rejected")]
    NonFiniteGradient(String),
    #[error("shape mismatch for parameter {0:?}")]
    Shape(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// `N₀`: epochs of likelihood-only training with frozen heads.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub n_mc: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 100,
            warmup_epochs: 10,
            batch_size: 32,
            alpha: 1.0,
            beta: 1.0,
            n_mc: 100,
            seed: 0,
            patience: 15,
            clip_norm: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.lr > 0.0) || !(self.eps > 0.0) {
            return bad("lr and eps must be positive");
        }
        if self.warmup_epochs > self.epochs {
            return bad("warmup_epochs must not exceed epochs");
        }
        if self.batch_size == 0 || self.n_mc == 0 {
            return bad("batch_size and n_mc must be positive");
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return bad("alpha and beta must be non-negative");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn phase(&self, epoch: usize) -> Phase {
        if epoch <= self.warmup_epochs {
            Phase::Likelihood
        } else {
            Phase::Joint
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam moments per parameter, each with its own step counter so that a
/// group can be restarted independently.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array>,
    pub v: Vec<Array>,
    pub steps: Vec<u64>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = || params.entries().iter().map(|e| Array::zeros(e.value.shape())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            steps: vec![0; params.len()],
        }
    }

    /// Clears moments and counters of every parameter in `group`.
    pub fn reset_group(&mut self, params: &ParamSet, group: ParamGroup) {
        for (i, e) in params.entries().iter().enumerate() {
            if e.group == group {
                self.m[i] = Array::zeros(e.value.shape());
                self.v[i] = Array::zeros(e.value.shape());
                self.steps[i] = 0;
            }
        }
    }
}

/// One bias-corrected Adam update for every parameter with a gradient.
///
/// Parameters whose gradient is `None` are left untouched. If any supplied
/// gradient is non-finite nothing is modified.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Option<Array>],
    state: &mut AdamState,
    cfg: AdamConfig,
) -> Result<(), TrainError> {
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            let entry = &params.entries()[i];
            if g.shape() != entry.value.shape() {
                return Err(TrainError::Shape(entry.name.clone()));
            }
            if !g.is_finite() {
                return Err(TrainError::NonFiniteGradient(entry.name.clone()));
            }
        }
    }
    for (i, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        state.steps[i] += 1;
        let t = state.steps[i] as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.value_at_mut(i).data_mut();
        for j in 0..p.len() {
            let gj = g.data()[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Scales gradients so their joint L2 norm is at most `max_norm`; returns
/// whether clipping happened.
pub fn clip_grad_norm(grads: &mut [Option<Array>], max_norm: f64) -> bool {
    let norm = grads
        .iter()
        .flatten()
        .map(Array::squared_norm)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
        true
    } else {
        false
    }
}

/// SplitMix64 finalizer over a few words; derives independent seeds.
pub fn mix_seed(words: &[u64]) -> u64 {
    let mut z: u64 = 0x9e37_79b9_7f4a_7c15;
    for &w in words {
        z = z.wrapping_add(w).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// Monte-Carlo stream for one sequence; independent of batch composition.
pub fn sequence_rng(seed: u64, epoch: u64, seq: &EventSequence) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, epoch, seq.fingerprint()]))
}

const EVAL_EPOCH: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub train_nll: f64,
    pub val_nll: f64,
    pub train_time: f64,
    pub train_type: f64,
    pub clipped_steps: usize,
    /// Elapsed time since training started; kept out of serialized history
    /// so that reruns produce identical files.
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum StopReason {
    Completed,
    EarlyStopped { epoch: usize },
    Diverged { epoch: usize },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: CoticModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_nll: f64,
    pub stop: StopReason,
}

impl TrainOutcome {
    /// History as line-delimited JSON records.
    pub fn history_jsonl(&self) -> String {
        self.history
            .iter()
            .map(|r| serde_json::to_string(r).expect("history record serializes") + "\n")
            .collect()
    }
}

/// Gradient of the batch-mean loss and the per-sequence reports.
pub struct BatchGradients {
    pub grads: Vec<Option<Array>>,
    pub reports: Vec<crate::losses::LossReport>,
}

fn trainable(phase: Phase) -> impl Fn(ParamGroup) -> bool {
    move |group| phase == Phase::Joint || group != ParamGroup::Heads
}

/// Forward and backward for a batch, averaging gradients over sequences.
pub fn batch_gradients(
    model: &CoticModel,
    batch: &[EventSequence],
    cfg: &TrainConfig,
    phase: Phase,
    epoch: u64,
) -> Result<BatchGradients, TrainError> {
    let mut total: Vec<Option<Array>> = vec![None; model.params().len()];
    let mut reports = Vec::with_capacity(batch.len());
    let scale = 1.0 / batch.len() as f64;
    for seq in batch {
        let g = Graph::new();
        let bound = BoundModel::new(&g, model, seq, trainable(phase))?;
        let mut rng = sequence_rng(cfg.seed, epoch, seq);
        let loss = sequence_loss(&g, &bound, seq, cfg.n_mc, cfg.weights(), phase, &mut rng)?;
        reports.push(loss.report);
        if !loss.report.combined.is_finite() {
            continue;
        }
        g.backward(loss.combined).map_err(LossError::from)?;
        for (slot, grad) in total.iter_mut().zip(bound.bind.grads(&g)) {
            let Some(grad) = grad else { continue };
            let scaled = grad.map(|v| v * scale);
            match slot {
                Some(acc) => acc
                    .data_mut()
                    .iter_mut()
                    .zip(scaled.data())
                    .for_each(|(a, b)| *a += b),
                None => *slot = Some(scaled),
            }
        }
    }
    Ok(BatchGradients {
        grads: total,
        reports,
    })
}

/// Mean per-sequence likelihood loss with a fixed Monte-Carlo stream.
pub fn mean_nll(model: &CoticModel, data: &[EventSequence], seed: u64, n_mc: usize) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mut sum = 0.0;
    for seq in data {
        let g = Graph::new();
        let bound = BoundModel::new(&g, model, seq, |_| false)?;
        let mut rng = sequence_rng(seed, EVAL_EPOCH, seq);
        let v = crate::losses::nll(&g, &bound, seq, n_mc, &mut rng)?;
        sum += g.item(v).map_err(LossError::from)?;
    }
    Ok(sum / data.len() as f64)
}

/// Runs the two-phase schedule. When `checkpoint` is given, the best model
/// so far is written there after every improvement.
pub fn train(
    model: &CoticModel,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    train_with_progress(model, train_set, val_set, cfg, checkpoint, |_| {})
}

/// [`train`] with a callback after every completed epoch.
pub fn train_with_progress(
    model: &CoticModel,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let checkpoint: Option<PathBuf> = checkpoint.map(Path::to_path_buf);
    let start = Instant::now();
    let mut current = model.clone();
    let mut state = AdamState::new(current.params());
    let mut best = current.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = None;
    let mut history = Vec::new();
    let mut stop = StopReason::Completed;
    let weights_ok = |m: &CoticModel| m.params().entries().iter().all(|e| e.value.is_finite());

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let phase = cfg.phase(epoch);
        if phase == Phase::Joint && epoch == cfg.warmup_epochs + 1 && epoch > 1 {
            state.reset_group(current.params(), ParamGroup::Heads);
        }
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, epoch as u64])));
        let shuffled: Vec<EventSequence> = order.iter().map(|&i| train_set.sequences[i].clone()).collect();

        let mut clipped = 0;
        let (mut nll_sum, mut time_sum, mut type_sum, mut n) = (0.0, 0.0, 0.0, 0usize);
        let mut diverged = false;
        for batch in batchify(&shuffled, cfg.batch_size) {
            let seqs = batch.unpad();
            let mut bg = batch_gradients(&current, &seqs, cfg, phase, epoch as u64)?;
            if bg.reports.iter().any(|r| !r.combined.is_finite()) {
                diverged = true;
                break;
            }
            for r in &bg.reports {
                nll_sum += r.nll;
                time_sum += r.time;
                type_sum += r.type_;
                n += 1;
            }
            if clip_grad_norm(&mut bg.grads, cfg.clip_norm) {
                clipped += 1;
            }
            if adam_step(current.params_mut(), &bg.grads, &mut state, cfg.adam()).is_err() {
                diverged = true;
                break;
            }
            if !weights_ok(&current) {
                diverged = true;
                break;
            }
        }
        if diverged {
            stop = StopReason::Diverged { epoch };
            break;
        }

        let val_nll = if val_set.is_empty() {
            mean_nll(&current, &train_set.sequences, cfg.seed, cfg.n_mc)?
        } else {
            mean_nll(&current, &val_set.sequences, cfg.seed, cfg.n_mc)?
        };
        let nf = n.max(1) as f64;
        history.push(EpochRecord {
            epoch,
            phase,
            train_nll: nll_sum / nf,
            val_nll,
            train_time: time_sum / nf,
            train_type: type_sum / nf,
            clipped_steps: clipped,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        on_epoch(history.last().expect("just pushed"));
        if !val_nll.is_finite() {
            stop = StopReason::Diverged { epoch };
            break;
        }
        if val_nll < best_val {
            best_val = val_nll;
            best_epoch = Some(epoch);
            best = current.clone();
            if let Some(path) = &checkpoint {
                save_checkpoint(&best, train_set.time_scale, path)?;
            }
        } else if best_epoch.is_some_and(|b| epoch - b >= cfg.patience) {
            stop = StopReason::EarlyStopped { epoch };
            break;
        }
    }
    if best_epoch.is_none() {
        if let Some(path) = &checkpoint {
            save_checkpoint(&best, train_set.time_scale, path)?;
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        best_val_nll: best_val,
        stop,
    })
}
