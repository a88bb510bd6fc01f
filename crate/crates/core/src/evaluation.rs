//! Test metrics, intensity-curve export and ablation sweeps.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::Activation;
use crate::events::{Dataset, EventSequence};
use crate::losses::{integration_limit, nll_value, BoundModel, LossError};
use crate::model::{CoticModel, HeadPredictions, IntensityCurve, ModelConfig, ModelError};
use crate::ndarr::Graph;
use crate::oracle::{hawkes_intensity_many, HawkesParams};
use crate::training::{mix_seed, train, TrainConfig, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains no events")]
    NoEvents,
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("sweep needs at least one value")]
    NoSweepValues,
    #[error("invalid sweep value {value:?} for axis {axis}: {message}")]
    SweepValue {
        axis: SweepAxis,
        value: String,
        message: String,
    },
    #[error("predictor returned {got} rows for a sequence of {want} events")]
    PredictionShape { got: usize, want: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything that can be scored by [`evaluate`].
pub trait Predictor {
    fn num_types(&self) -> usize;

    /// Negative log-likelihood of one sequence.
    fn sequence_nll(&self, seq: &EventSequence, n_mc: usize, rng: &mut ChaCha8Rng) -> Result<f64, EvalError>;

    /// One row per event: predicted next gap and type scores.
    fn predict(&self, seq: &EventSequence) -> Result<HeadPredictions, EvalError>;
}

impl Predictor for CoticModel {
    fn num_types(&self) -> usize {
        CoticModel::num_types(self)
    }

    fn sequence_nll(&self, seq: &EventSequence, n_mc: usize, rng: &mut ChaCha8Rng) -> Result<f64, EvalError> {
        let g = Graph::new();
        let bound = BoundModel::new(&g, self, seq, |_| false)?;
        let v = crate::losses::nll(&g, &bound, seq, n_mc, rng)?;
        Ok(g.item(v).map_err(LossError::from)?)
    }

    fn predict(&self, seq: &EventSequence) -> Result<HeadPredictions, EvalError> {
        Ok(self.predict_heads(seq)?)
    }
}

/// Something with a numerically evaluable intensity.
pub trait IntensityCurveSource {
    fn intensity_curve(&self, seq: &EventSequence, queries: &[f64]) -> Result<IntensityCurve, EvalError>;
}

impl IntensityCurveSource for CoticModel {
    fn intensity_curve(&self, seq: &EventSequence, queries: &[f64]) -> Result<IntensityCurve, EvalError> {
        Ok(self.intensity(seq, queries)?)
    }
}

impl IntensityCurveSource for HawkesParams {
    fn intensity_curve(&self, seq: &EventSequence, queries: &[f64]) -> Result<IntensityCurve, EvalError> {
        let total = hawkes_intensity_many(self, seq.times(), queries);
        let probs = self.type_probs();
        Ok(IntensityCurve {
            times: queries.to_vec(),
            values: total.iter().map(|l| probs.iter().map(|p| p * l).collect()).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ll_per_event: f64,
    /// Mean absolute return-time error in normalized units; `None` when no
    /// sequence has two events.
    pub return_mae: Option<f64>,
    /// The same error in the data's original time units.
    pub return_mae_raw: Option<f64>,
    pub type_accuracy: Option<f64>,
    pub n_predictions: usize,
    pub n_events: usize,
    pub n_sequences: usize,
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Scores a predictor on every sequence of `data`.
///
/// The likelihood uses an independent Monte-Carlo stream per sequence,
/// derived from `seed` and the sequence content. Return-time predictions at
/// positions `1..k` are compared with the next gap, clamped at zero.
pub fn evaluate(
    predictor: &dyn Predictor,
    data: &Dataset,
    n_mc: usize,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    if data.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let (mut nll_sum, mut n_events) = (0.0, 0usize);
    let (mut abs_err, mut correct, mut n_pred) = (0.0, 0usize, 0usize);
    for seq in &data.sequences {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, seq.fingerprint()]));
        nll_sum += predictor.sequence_nll(seq, n_mc, &mut rng)?;
        n_events += seq.len();
        if seq.len() < 2 {
            continue;
        }
        let pred = predictor.predict(seq)?;
        let k = seq.len();
        if pred.return_times.len() < k - 1 || pred.type_scores.len() < k - 1 {
            return Err(EvalError::PredictionShape {
                got: pred.return_times.len().min(pred.type_scores.len()),
                want: k,
            });
        }
        for (i, gap) in seq.gaps().iter().enumerate() {
            abs_err += (pred.return_times[i].max(0.0) - gap).abs();
            if argmax(&pred.type_scores[i]) + 1 == seq.marks()[i + 1] {
                correct += 1;
            }
            n_pred += 1;
        }
    }
    if n_events == 0 {
        return Err(EvalError::NoEvents);
    }
    let (mae, acc) = if n_pred > 0 {
        (Some(abs_err / n_pred as f64), Some(correct as f64 / n_pred as f64))
    } else {
        (None, None)
    };
    Ok(MetricsReport {
        ll_per_event: -nll_sum / n_events as f64,
        return_mae: mae,
        return_mae_raw: mae.map(|m| m * data.time_scale),
        type_accuracy: acc,
        n_predictions: n_pred,
        n_events,
        n_sequences: data.len(),
    })
}

/// Exact likelihood under known Hawkes parameters, as a per-event value
/// comparable to [`MetricsReport::ll_per_event`]. The compensator runs to the
/// last event, matching the model likelihood.
pub fn oracle_ll_per_event(params: &HawkesParams, data: &Dataset) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    let mut n = 0;
    for seq in &data.sequences {
        sum += crate::oracle::hawkes_nll_exact(params, seq, integration_limit(seq));
        n += seq.len();
    }
    if n == 0 {
        return Err(EvalError::NoEvents);
    }
    Ok(-sum / n as f64)
}

/// Mean NLL of a constant-rate source, kept for quick baselines.
pub fn constant_rate_nll(rates: &[f64], seq: &EventSequence) -> Result<f64, EvalError> {
    let src = crate::losses::ConstantIntensity { rates: rates.to_vec() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(nll_value(&src, seq, 1, &mut rng)?)
}

/// `grid_size` evenly spaced points from 0 to the last event time.
pub fn uniform_grid(seq: &EventSequence, grid_size: usize) -> Result<Vec<f64>, EvalError> {
    if grid_size < 2 {
        return Err(EvalError::GridTooSmall(grid_size));
    }
    let end = integration_limit(seq);
    let last = (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|i| if i + 1 == grid_size { end } else { end * i as f64 / last })
        .collect())
}

/// Intensity of every type on a uniform grid over `[0, t_k]`.
pub fn export_intensity(
    source: &dyn IntensityCurveSource,
    seq: &EventSequence,
    grid_size: usize,
) -> Result<IntensityCurve, EvalError> {
    let grid = uniform_grid(seq, grid_size)?;
    source.intensity_curve(seq, &grid)
}

/// Writes `t,lambda_1..lambda_K,lambda_total` rows.
pub fn write_curve_csv(curve: &IntensityCurve, mut out: impl Write) -> Result<(), EvalError> {
    let k = curve.num_types();
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("lambda_{i}")));
    header.push("lambda_total".into());
    writeln!(out, "{}", header.join(","))?;
    for (t, row) in curve.times.iter().zip(&curve.values) {
        let total: f64 = row.iter().sum();
        let cells: Vec<String> = std::iter::once(*t)
            .chain(row.iter().copied())
            .chain(std::iter::once(total))
            .map(|v| v.to_string())
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Root mean squared difference between two curves on the same grid,
/// over all types.
pub fn curve_rmse(a: &IntensityCurve, b: &IntensityCurve) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (ra, rb) in a.values.iter().zip(&b.values) {
        for (x, y) in ra.iter().zip(rb) {
            sum += (x - y) * (x - y);
            n += 1;
        }
    }
    (sum / n.max(1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Layers,
    KernelSize,
    Activation,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Layers => "layers",
            SweepAxis::KernelSize => "kernel_size",
            SweepAxis::Activation => "activation",
        })
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "layers" => Ok(SweepAxis::Layers),
            "kernel_size" | "kernel-size" => Ok(SweepAxis::KernelSize),
            "activation" => Ok(SweepAxis::Activation),
            other => Err(format!("unknown sweep axis {other:?}")),
        }
    }
}

impl SweepAxis {
    /// Returns `base` with this axis set to `value`.
    pub fn apply(self, base: &ModelConfig, value: &str) -> Result<ModelConfig, EvalError> {
        let err = |message: String| EvalError::SweepValue {
            axis: self,
            value: value.to_string(),
            message,
        };
        let mut cfg = base.clone();
        match self {
            SweepAxis::Layers => cfg.num_layers = value.trim().parse().map_err(|e| err(format!("{e}")))?,
            SweepAxis::KernelSize => cfg.kernel_size = value.trim().parse().map_err(|e| err(format!("{e}")))?,
            SweepAxis::Activation => cfg.activation = value.trim().parse::<Activation>().map_err(err)?,
        }
        cfg.validate().map_err(|e| err(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub receptive_field: Option<usize>,
    pub metrics: Option<MetricsReport>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv(&self, mut out: impl Write) -> Result<(), EvalError> {
        writeln!(
            out,
            "{},receptive_field,ll_per_event,return_mae,return_mae_raw,type_accuracy,n_predictions,best_epoch,error",
            self.axis
        )?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            let m = r.metrics.as_ref();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.value,
                r.receptive_field.map_or(String::new(), |v| v.to_string()),
                opt(m.map(|m| m.ll_per_event)),
                opt(m.and_then(|m| m.return_mae)),
                opt(m.and_then(|m| m.return_mae_raw)),
                opt(m.and_then(|m| m.type_accuracy)),
                m.map_or(String::new(), |m| m.n_predictions.to_string()),
                r.best_epoch.map_or(String::new(), |v| v.to_string()),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            )?;
        }
        Ok(())
    }
}

/// Data for one sweep: fit on `train`, select on `val`, report on `test`.
pub struct SweepData<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub test: &'a Dataset,
}

/// Train and evaluate one model per value, all from the same seeds.
/// Failures are recorded in the row and do not stop the sweep.
pub fn ablation_sweep(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    axis: SweepAxis,
    values: &[String],
    data: &SweepData<'_>,
    eval_n_mc: usize,
) -> Result<SweepTable, EvalError> {
    if values.is_empty() {
        return Err(EvalError::NoSweepValues);
    }
    let rows = values
        .iter()
        .map(|value| {
            let mut row = SweepRow {
                value: value.clone(),
                receptive_field: None,
                metrics: None,
                best_epoch: None,
                error: None,
            };
            let result = (|| -> Result<(), EvalError> {
                let cfg = axis.apply(base, value)?;
                row.receptive_field = Some(cfg.receptive_field());
                let (model, best_epoch) = train_cell(cfg, train_cfg, data)?;
                row.best_epoch = best_epoch;
                row.metrics = Some(evaluate(&model, data.test, eval_n_mc, train_cfg.seed)?);
                Ok(())
            })();
            if let Err(e) = result {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();
    Ok(SweepTable { axis, rows })
}

fn train_cell(
    cfg: ModelConfig,
    train_cfg: &TrainConfig,
    data: &SweepData<'_>,
) -> Result<(CoticModel, Option<usize>), EvalError> {
    let model = CoticModel::new(cfg)?;
    let outcome = train(&model, data.train, data.val, train_cfg, None)?;
    Ok((outcome.model, outcome.best_epoch))
}
