//! Ground-truth processes with closed-form likelihoods.
//!
//! The exponential Hawkes process
//!
//! ```text
//! λ(t) = μ + a Σ_{t_j < t} e^{−b (t − t_j)}
//! ```
//!
//! has compensator `μΔ + (a/b) Σ_j (e^{−b(s−t_j)} − e^{−b(u−t_j)})` over any
//! window `[s, u]`, so likelihoods and survival probabilities are exact.
//! Marks are drawn from a fixed categorical distribution independent of
//! time, giving per-type intensities `λ_c(t) = p_c λ(t)`. With `a = 0` the
//! process is homogeneous Poisson.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::events::{Dataset, EventSequence, EventsError};
use crate::losses::{IntensitySource, LossError};
use crate::ndarr::{Array, Graph, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("invalid Hawkes parameters: {0}")]
    InvalidParams(String),
    #[error("unstable process: branching ratio {0} ≥ 1")]
    Unstable(f64),
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    /// Base rate `μ > 0`.
    pub mu: f64,
    /// Jump size `a ≥ 0` added to the intensity by each event.
    pub a: f64,
    /// Decay rate `b > 0`.
    pub b: f64,
    /// Probabilities of types `1..=K`; empty means a single type.
    #[serde(default)]
    pub mark_probs: Vec<f64>,
}

impl HawkesParams {
    pub fn new(mu: f64, a: f64, b: f64) -> Self {
        Self {
            mu,
            a,
            b,
            mark_probs: Vec::new(),
        }
    }

    pub fn poisson(rate: f64) -> Self {
        Self::new(rate, 0.0, 1.0)
    }

    pub fn with_marks(mut self, probs: Vec<f64>) -> Self {
        self.mark_probs = probs;
        self
    }

    pub fn branching_ratio(&self) -> f64 {
        self.a / self.b
    }

    pub fn num_types(&self) -> usize {
        self.mark_probs.len().max(1)
    }

    pub fn type_probs(&self) -> Vec<f64> {
        if self.mark_probs.is_empty() {
            vec![1.0]
        } else {
            self.mark_probs.clone()
        }
    }

    /// Checks signs and that the mark distribution sums to one.
    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(OracleError::InvalidParams(format!("mu = {} must be positive", self.mu)));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(OracleError::InvalidParams(format!("a = {} must be non-negative", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(OracleError::InvalidParams(format!("b = {} must be positive", self.b)));
        }
        if !self.mark_probs.is_empty() {
            let sum: f64 = self.mark_probs.iter().sum();
            if self.mark_probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(OracleError::InvalidParams(format!(
                    "mark probabilities {:?} must be non-negative and sum to 1",
                    self.mark_probs
                )));
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the stability requirement `a/b < 1`.
    pub fn validate_stable(&self) -> Result<(), OracleError> {
        self.validate()?;
        let n = self.branching_ratio();
        if n >= 1.0 {
            return Err(OracleError::Unstable(n));
        }
        Ok(())
    }

    /// Long-run expected count on `[0, T]` from an empty start, ignoring the
    /// initial transient: `μT / (1 − a/b)`.
    pub fn stationary_count(&self, horizon: f64) -> f64 {
        self.mu * horizon / (1.0 - self.branching_ratio())
    }
}

/// Total intensity `μ + a Σ_{t_j < t} e^{−b(t−t_j)}`; events at or after `t`
/// are ignored.
pub fn hawkes_intensity(params: &HawkesParams, history: &[f64], t: f64) -> f64 {
    let excitation: f64 = history
        .iter()
        .take_while(|&&tj| tj < t)
        .map(|&tj| (-params.b * (t - tj)).exp())
        .sum();
    params.mu + params.a * excitation
}

/// Total intensity at many query times in `O((n + Q) log Q)`.
///
/// Queries may come in any order; the excitation is carried forward
/// recursively between sorted queries.
pub fn hawkes_intensity_many(params: &HawkesParams, history: &[f64], queries: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..queries.len()).collect();
    order.sort_by(|&i, &j| queries[i].total_cmp(&queries[j]));
    let mut out = vec![0.0; queries.len()];
    // excitation state S(t) = Σ_{t_j ≤ anchor} e^{−b(anchor − t_j)}
    let mut anchor = 0.0;
    let mut state = 0.0;
    let mut next = 0;
    for i in order {
        let t = queries[i];
        while next < history.len() && history[next] < t {
            let tj = history[next];
            state = state * (-params.b * (tj - anchor)).exp() + 1.0;
            anchor = tj;
            next += 1;
        }
        let excitation = if next == 0 {
            0.0
        } else {
            state * (-params.b * (t - anchor)).exp()
        };
        out[i] = params.mu + params.a * excitation;
    }
    out
}

/// `∫_{from}^{to} λ(u) du` assuming no events inside `(from, to)`; events at
/// or before `from` excite the whole interval.
pub fn compensator(params: &HawkesParams, history: &[f64], from: f64, to: f64) -> f64 {
    let decay: f64 = history
        .iter()
        .take_while(|&&tj| tj <= from)
        .map(|&tj| (-params.b * (from - tj)).exp() - (-params.b * (to - tj)).exp())
        .sum();
    params.mu * (to - from) + params.a / params.b * decay
}

/// Probability of no event in `(from, to]` given the history up to `from`:
/// `exp(−∫ λ)`.
pub fn survival_prob(
    params: &HawkesParams,
    history: &[f64],
    from: f64,
    to: f64,
) -> Result<f64, OracleError> {
    if !(from <= to) {
        return Err(OracleError::Domain(format!("interval [{from}, {to}] is reversed")));
    }
    Ok((-compensator(params, history, from, to)).exp())
}

/// Exact negative log-likelihood of `seq` observed on `[0, horizon]`,
/// including the mark term `−Σ log p_{m_j}` when several types exist.
pub fn hawkes_nll_exact(params: &HawkesParams, seq: &EventSequence, horizon: f64) -> f64 {
    let times = seq.times();
    let decay: f64 = times
        .iter()
        .filter(|&&tj| tj <= horizon)
        .map(|&tj| 1.0 - (-params.b * (horizon - tj)).exp())
        .sum();
    let comp = params.mu * horizon + params.a / params.b * decay;
    let probs = params.type_probs();
    let lam = hawkes_intensity_many(params, times, times);
    let log_term: f64 = lam
        .iter()
        .zip(seq.marks())
        .zip(times)
        .filter(|(_, &t)| t <= horizon)
        .map(|((l, &m), _)| (l * probs[m - 1]).ln())
        .sum();
    comp - log_term
}

/// Ogata thinning on `[0, horizon]`.
///
/// Between events the intensity only decays, so its value just after the
/// current time bounds it until the next acceptance.
pub fn simulate_hawkes(
    params: &HawkesParams,
    horizon: f64,
    seed: u64,
) -> Result<EventSequence, OracleError> {
    params.validate_stable()?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(OracleError::Domain(format!("horizon {horizon} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = params.type_probs();
    let mut times: Vec<f64> = Vec::new();
    let mut marks = Vec::new();
    let mut t = 0.0;
    // excitation Σ e^{−b(t−t_j)} at the current time t, including events at t
    let mut excitation = 0.0;
    loop {
        let bound = params.mu + params.a * excitation;
        let u: f64 = rng.gen();
        let wait = -(1.0 - u).ln() / bound;
        let candidate = t + wait;
        if candidate > horizon {
            break;
        }
        excitation *= (-params.b * wait).exp();
        t = candidate;
        let lam = params.mu + params.a * excitation;
        let accept: f64 = rng.gen();
        if accept * bound <= lam {
            if times.last().is_some_and(|&last| t <= last) {
                // wait underflowed to zero; skip the degenerate duplicate
                continue;
            }
            times.push(t);
            marks.push(draw_mark(&probs, &mut rng));
            excitation += 1.0;
        }
    }
    EventSequence::new(format!("{seed}"), times, marks, horizon)
        .map_err(|e| OracleError::Domain(e.to_string()))
}

fn draw_mark(probs: &[f64], rng: &mut impl Rng) -> usize {
    if probs.len() == 1 {
        return 1;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i + 1;
        }
    }
    probs.len()
}

/// `n` independent simulations with seeds `seed, seed+1, …`, ids `0..n`,
/// in raw time units (`time_scale = 1`).
pub fn simulate_dataset(
    params: &HawkesParams,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<Dataset, OracleError> {
    let sequences = (0..n)
        .map(|i| {
            let s = simulate_hawkes(params, horizon, seed.wrapping_add(i as u64))?;
            EventSequence::new(i.to_string(), s.times().to_vec(), s.marks().to_vec(), horizon)
                .map_err(|e: EventsError| OracleError::Domain(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(sequences, params.num_types(), 1.0).map_err(|e| OracleError::Domain(e.to_string()))
}

/// Compensator increments between consecutive events (first from time 0).
/// Under the true model these are i.i.d. Exp(1).
pub fn rescaled_interarrivals(params: &HawkesParams, times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut prev = 0.0;
    for (j, &t) in times.iter().enumerate() {
        out.push(compensator(params, &times[..j], prev, t));
        prev = t;
    }
    out
}

/// One-sample Kolmogorov–Smirnov test against Exp(1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn ks_test_exp1(samples: &[f64]) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-x.max(0.0)).exp();
            let lo = cdf - i as f64 / nf;
            let hi = (i + 1) as f64 / nf - cdf;
            lo.max(hi)
        })
        .fold(0.0, f64::max);
    KsResult {
        statistic,
        p_value: kolmogorov_pvalue(statistic, n),
        n,
    }
}

/// Asymptotic `P(D_n > d)` with the Stephens small-sample correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

impl IntensitySource for HawkesParams {
    fn num_types(&self) -> usize {
        HawkesParams::num_types(self)
    }

    fn intensities(&self, g: &Graph, seq: &EventSequence, queries: &[f64]) -> Result<Var, LossError> {
        let probs = self.type_probs();
        let total = hawkes_intensity_many(self, seq.times(), queries);
        let data = total
            .iter()
            .flat_map(|&l| probs.iter().map(move |p| p * l))
            .collect();
        Ok(g.constant(Array::matrix(queries.len(), probs.len(), data)?))
    }
}

/// Homogeneous Poisson maximum-likelihood fit `λ̂ = k / t_k` per sequence;
/// returns the total negative log-likelihood and event count over `data`.
pub fn poisson_mle_nll(data: &Dataset) -> (f64, usize) {
    let mut nll = 0.0;
    let mut events = 0;
    for s in &data.sequences {
        let k = s.len();
        let Some(tk) = s.last_time() else { continue };
        if tk <= 0.0 {
            continue;
        }
        let rate = k as f64 / tk;
        nll += rate * tk - k as f64 * rate.ln();
        events += k;
    }
    (nll, events)
}
