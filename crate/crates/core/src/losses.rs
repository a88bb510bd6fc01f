//! Training objectives.
//!
//! The likelihood term is
//!
//! ```text
//! L_ll = ∫_0^{t_k} Σ_c λ_c(t) dt − Σ_j log λ_{m_j}(t_j)
//! ```
//!
//! with the integral replaced by a Monte-Carlo average over uniform points.
//! Head losses use log-cosh for the return time and cross-entropy for the
//! next type. The log-cosh form is `x + log(1 + e^{−2x})`, which exceeds the
//! true `log cosh x` by the constant `log 2`; gradients are unaffected.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::events::EventSequence;
use crate::model::{CoticModel, ModelError};
use crate::ndarr::{softplus, Array, ArrayError, Binding, Graph, Var};

/// Floor applied to intensities before taking logs.
pub const LOG_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("domain error: {0}")]
    Domain(String),
}

impl From<ArrayError> for LossError {
    fn from(e: ArrayError) -> Self {
        LossError::Model(ModelError::Array(e))
    }
}

/// Anything that can report per-type intensities as a graph node.
pub trait IntensitySource {
    fn num_types(&self) -> usize;

    /// `Q × K` intensities at `queries` for the history in `seq`; at an event
    /// time the value is the left limit (the event itself is not history).
    fn intensities(&self, g: &Graph, seq: &EventSequence, queries: &[f64]) -> Result<Var, LossError>;
}

/// Known per-type rates that do not depend on history.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantIntensity {
    pub rates: Vec<f64>,
}

impl IntensitySource for ConstantIntensity {
    fn num_types(&self) -> usize {
        self.rates.len()
    }

    fn intensities(&self, g: &Graph, _seq: &EventSequence, queries: &[f64]) -> Result<Var, LossError> {
        let k = self.rates.len();
        let data = queries.iter().flat_map(|_| self.rates.iter().copied()).collect();
        Ok(g.constant(Array::matrix(queries.len(), k, data)?))
    }
}

/// The model bound to one graph with its backbone already evaluated.
pub struct BoundModel<'a> {
    pub model: &'a CoticModel,
    pub bind: Binding,
    pub embeddings: Var,
}

impl<'a> BoundModel<'a> {
    /// Binds parameters (constants unless `trainable` accepts their group)
    /// and runs the backbone on `seq`.
    pub fn new(
        g: &Graph,
        model: &'a CoticModel,
        seq: &EventSequence,
        trainable: impl Fn(crate::ndarr::ParamGroup) -> bool,
    ) -> Result<Self, LossError> {
        let bind = model.params().bind(g, trainable);
        let embeddings = model.backbone(g, &bind, seq)?;
        Ok(Self {
            model,
            bind,
            embeddings,
        })
    }
}

impl IntensitySource for BoundModel<'_> {
    fn num_types(&self) -> usize {
        self.model.num_types()
    }

    fn intensities(&self, g: &Graph, seq: &EventSequence, queries: &[f64]) -> Result<Var, LossError> {
        Ok(self
            .model
            .intensity_at(g, &self.bind, seq, self.embeddings, queries)?)
    }
}

/// `n` i.i.d. draws from `Uniform[0, upper)`.
pub fn uniform_points(upper: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>() * upper).collect()
}

/// Monte-Carlo estimate `T · mean f(u_i)` of `∫_0^T f`.
pub fn mc_integral(
    f: impl Fn(f64) -> f64,
    upper: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Result<f64, LossError> {
    if !(upper >= 0.0) {
        return Err(LossError::Domain(format!("integration limit {upper} is negative")));
    }
    if n == 0 {
        return Err(LossError::Domain("need at least one sample".into()));
    }
    let pts = uniform_points(upper, n, rng);
    let sum: f64 = pts.iter().map(|&u| f(u)).sum();
    Ok(upper * (sum / n as f64))
}

/// Upper limit of the compensator integral: the last event time, or the
/// horizon for a sequence with no events.
pub fn integration_limit(seq: &EventSequence) -> f64 {
    seq.last_time().unwrap_or(seq.horizon())
}

/// Negative log-likelihood of `seq` under `source` as a scalar node.
pub fn nll(
    g: &Graph,
    source: &dyn IntensitySource,
    seq: &EventSequence,
    n_mc: usize,
    rng: &mut impl Rng,
) -> Result<Var, LossError> {
    if n_mc == 0 {
        return Err(LossError::Domain("need at least one Monte-Carlo sample".into()));
    }
    let k = seq.len();
    let upper = integration_limit(seq);
    let mut queries = seq.times().to_vec();
    queries.extend(uniform_points(upper, n_mc, rng));
    let lam = source.intensities(g, seq, &queries)?;

    let mc_rows: Vec<usize> = (k..k + n_mc).collect();
    let at_mc = g.gather_rows(lam, &mc_rows)?;
    let per_point = g.sum_last_axis(at_mc)?;
    let mean = g.mean(per_point)?;
    let compensator = g.scale(mean, upper);
    if k == 0 {
        return Ok(compensator);
    }

    let ev_rows: Vec<usize> = (0..k).collect();
    let at_events = g.gather_rows(lam, &ev_rows)?;
    let cols = seq
        .marks()
        .iter()
        .map(|&m| {
            if (1..=source.num_types()).contains(&m) {
                Ok(m - 1)
            } else {
                Err(LossError::Domain(format!("mark {m} outside 1..={}", source.num_types())))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let picked = g.pick_per_row(at_events, &cols)?;
    let floored = g.clamp_min(picked, LOG_FLOOR);
    let log_lam = g.log(floored)?;
    let event_term = g.sum(log_lam);
    Ok(g.sub(compensator, event_term)?)
}

/// Numeric negative log-likelihood.
pub fn nll_value(
    source: &dyn IntensitySource,
    seq: &EventSequence,
    n_mc: usize,
    rng: &mut impl Rng,
) -> Result<f64, LossError> {
    let g = Graph::new();
    let v = nll(&g, source, seq, n_mc, rng)?;
    Ok(g.item(v)?)
}

/// `x + log(1 + e^{−2x})` with `x = predicted − target`.
pub fn logcosh_loss(predicted: f64, target: f64) -> f64 {
    let x = predicted - target;
    // x + softplus(−2x) rewritten as |x| + log(1 + e^{−2|x|}) keeps both
    // signs overflow-free and exactly symmetric
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// `−log softmax(scores)[true_type]` for a 1-based `true_type`.
pub fn cross_entropy_loss(scores: &[f64], true_type: usize) -> Result<f64, LossError> {
    if !(1..=scores.len()).contains(&true_type) {
        return Err(LossError::Domain(format!(
            "type {true_type} outside 1..={}",
            scores.len()
        )));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(lse - scores[true_type - 1])
}

/// Graph form of [`logcosh_loss`] averaged over rows: `pred` is `n × 1`.
pub fn logcosh_mean(g: &Graph, pred: Var, targets: &[f64]) -> Result<Var, LossError> {
    let t = g.constant(Array::matrix(targets.len(), 1, targets.to_vec())?);
    let x = g.sub(pred, t)?;
    let neg2x = g.scale(x, -2.0);
    let sp = g.softplus(neg2x)?;
    let per = g.add(x, sp)?;
    Ok(g.mean(per)?)
}

/// Graph form of [`cross_entropy_loss`] averaged over rows.
pub fn cross_entropy_mean(g: &Graph, scores: Var, true_types: &[usize]) -> Result<Var, LossError> {
    let k = g.shape(scores)[1];
    let cols = true_types
        .iter()
        .map(|&m| {
            if (1..=k).contains(&m) {
                Ok(m - 1)
            } else {
                Err(LossError::Domain(format!("type {m} outside 1..={k}")))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ls = g.log_softmax_rows(scores)?;
    let picked = g.pick_per_row(ls, &cols)?;
    let mean = g.mean(picked)?;
    Ok(g.scale(mean, -1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Likelihood only; prediction heads frozen.
    Likelihood,
    /// Likelihood plus weighted head losses.
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

/// Per-sequence loss components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub nll: f64,
    pub time: f64,
    pub type_: f64,
    pub combined: f64,
    pub mc_samples: usize,
    /// Number of head predictions with a target (`len − 1`).
    pub n_predictions: usize,
}

impl LossReport {
    pub fn combine(ll: f64, time: f64, type_: f64, weights: LossWeights, phase: Phase) -> f64 {
        match phase {
            Phase::Likelihood => ll,
            Phase::Joint => ll + weights.alpha * time + weights.beta * type_,
        }
    }
}

/// Graph nodes for one sequence's losses.
pub struct SequenceLoss {
    pub combined: Var,
    pub report: LossReport,
}

/// Builds every loss term for one sequence on `g`.
///
/// In the likelihood phase the heads are not evaluated at all. Head losses
/// average over positions `1..k−1`, each predicting the following event.
pub fn sequence_loss(
    g: &Graph,
    bound: &BoundModel<'_>,
    seq: &EventSequence,
    n_mc: usize,
    weights: LossWeights,
    phase: Phase,
    rng: &mut impl Rng,
) -> Result<SequenceLoss, LossError> {
    let ll = nll(g, bound, seq, n_mc, rng)?;
    let ll_value = g.item(ll)?;
    let n_pred = seq.len().saturating_sub(1);
    if phase == Phase::Likelihood || n_pred == 0 {
        return Ok(SequenceLoss {
            combined: ll,
            report: LossReport {
                nll: ll_value,
                time: 0.0,
                type_: 0.0,
                combined: ll_value,
                mc_samples: n_mc,
                n_predictions: n_pred,
            },
        });
    }
    let rows: Vec<usize> = (0..n_pred).collect();
    let h = g.gather_rows(bound.embeddings, &rows)?;
    let (dt, scores) = bound.model.heads(g, &bound.bind, h)?;
    let time = logcosh_mean(g, dt, &seq.gaps())?;
    let type_ = cross_entropy_mean(g, scores, &seq.marks()[1..])?;
    let wt = g.scale(time, weights.alpha);
    let wc = g.scale(type_, weights.beta);
    let heads = g.add(wt, wc)?;
    let combined = g.add(ll, heads)?;
    let (tv, cv) = (g.item(time)?, g.item(type_)?);
    Ok(SequenceLoss {
        combined,
        report: LossReport {
            nll: ll_value,
            time: tv,
            type_: cv,
            combined: g.item(combined)?,
            mc_samples: n_mc,
            n_predictions: n_pred,
        },
    })
}

/// Batch objective: mean over sequences of the phase-appropriate combination.
pub fn combined_loss(reports: &[LossReport], weights: LossWeights, phase: Phase) -> Result<f64, LossError> {
    if weights.alpha < 0.0 || weights.beta < 0.0 {
        return Err(LossError::Domain("loss weights must be non-negative".into()));
    }
    if reports.is_empty() {
        return Err(LossError::Domain("empty batch".into()));
    }
    let total: f64 = reports
        .iter()
        .map(|r| LossReport::combine(r.nll, r.time, r.type_, weights, phase))
        .sum();
    Ok(total / reports.len() as f64)
}

/// Reference log-cosh through the generic softplus, for cross-checks.
pub fn logcosh_via_softplus(x: f64) -> f64 {
    x + softplus(-2.0 * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn mc_constant_integrand_is_exact() {
        for seed in 0..5 {
            let v = mc_integral(|_| 2.5, 3.0, 100, &mut rng(seed)).unwrap();
            assert_eq!(v, 7.5);
        }
        assert_eq!(mc_integral(|_| 0.0, 3.0, 10, &mut rng(0)).unwrap(), 0.0);
        assert_eq!(mc_integral(|t| t + 1.0, 0.0, 10, &mut rng(0)).unwrap(), 0.0);
        assert!(mc_integral(|t| t, -1.0, 10, &mut rng(0)).is_err());
    }

    #[test]
    fn mc_linear_integrand() {
        for seed in 0..10 {
            let v = mc_integral(|t| t, 1.0, 100_000, &mut rng(seed)).unwrap();
            assert!((v - 0.5).abs() < 0.01, "seed {seed}: {v}");
        }
    }

    #[test]
    fn unit_poisson_nll_is_last_time() {
        let s = EventSequence::observed("s", vec![0.3, 1.1, 2.9], vec![1, 1, 1]).unwrap();
        let src = ConstantIntensity { rates: vec![1.0] };
        assert_eq!(nll_value(&src, &s, 17, &mut rng(3)).unwrap(), 2.9);
    }

    #[test]
    fn empty_window_is_compensator() {
        let s = EventSequence::new("s", vec![], vec![], 4.0).unwrap();
        let src = ConstantIntensity { rates: vec![0.5] };
        assert_eq!(nll_value(&src, &s, 8, &mut rng(0)).unwrap(), 2.0);
    }

    #[test]
    fn compensator_uses_total_intensity() {
        let s = EventSequence::observed("s", vec![1.0, 2.0], vec![1, 2]).unwrap();
        let src = ConstantIntensity { rates: vec![0.5, 0.25] };
        let v = nll_value(&src, &s, 4, &mut rng(0)).unwrap();
        let expected = 0.75 * 2.0 - (0.5f64.ln() + 0.25f64.ln());
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn logcosh_values() {
        assert_eq!(logcosh_loss(0.0, 0.0), std::f64::consts::LN_2);
        let expected_two = 2.0 + (-4.0f64).exp().ln_1p();
        assert!((logcosh_loss(2.0, 0.0) - 2.018_149_927_917_809).abs() < 1e-12);
        assert_eq!(logcosh_loss(2.0, 0.0), logcosh_loss(-2.0, 0.0));
        assert!((logcosh_loss(2.0, 0.0) - expected_two).abs() < 1e-15);
        assert!((logcosh_loss(1.0, 0.0) - 1.126_928_011_042_972_6).abs() < 1e-12);
        assert!(logcosh_loss(1e6, 0.0).is_finite());
        assert!(logcosh_loss(-1e6, 0.0).is_finite());
        for x in [-3.0, -0.4, 0.0, 0.7, 5.0] {
            assert!((logcosh_loss(x, 0.0) - logcosh_via_softplus(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_values() {
        assert!((cross_entropy_loss(&[0.0; 4], 2).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(cross_entropy_loss(&[1000.0, 0.0, 0.0], 1).unwrap() < 1e-300);
        assert!((cross_entropy_loss(&[1.0, 2.0, 3.0], 3).unwrap() - 0.407_605_964_444_380_1).abs() < 1e-12);
        assert!(cross_entropy_loss(&[1.0, 2.0], 3).is_err());
        assert!(cross_entropy_loss(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn combined_degenerate_weights() {
        let r = LossReport {
            nll: 3.0,
            time: 0.5,
            type_: 0.25,
            combined: 0.0,
            mc_samples: 1,
            n_predictions: 1,
        };
        let zero = LossWeights { alpha: 0.0, beta: 0.0 };
        assert_eq!(
            combined_loss(&[r], zero, Phase::Joint).unwrap(),
            combined_loss(&[r], LossWeights::default(), Phase::Likelihood).unwrap()
        );
        assert_eq!(combined_loss(&[r, r, r], LossWeights::default(), Phase::Joint).unwrap(), 3.75);
        assert!(combined_loss(&[r], LossWeights { alpha: -1.0, beta: 0.0 }, Phase::Joint).is_err());
    }
}
