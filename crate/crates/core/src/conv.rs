//! Continuous-time causal convolution over event sequences.
//!
//! An event sequence is treated as a sum of Diracs `m(t) = Σ_j m_j δ(t − t_j)`,
//! so convolving it with a kernel function collapses to a finite sum
//! `y(t) = Σ_j k(t − t_j) m_j`. The kernel `k` maps a time lag to a
//! `d_out × d_in` matrix and is itself a small feed-forward network of the
//! lag, zeroed for negative lags.
//!
//! The sum is truncated to a dilated window of the most recent events: for a
//! position whose latest admissible event is `i`, only events
//! `i, i − d, …, i − (s − 1)d` contribute.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ndarr::{Array, ArrayError, Binding, ConvPair, Graph, ParamGroup, ParamId, ParamSet, Var};

pub const KERNEL_LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    LeakyRelu,
    Sine,
}

impl Activation {
    fn apply(self, g: &Graph, x: Var) -> Result<Var, ArrayError> {
        match self {
            Activation::LeakyRelu => g.leaky_relu(x, KERNEL_LEAKY_SLOPE),
            Activation::Sine => g.sin(x),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "sine" => Ok(Activation::Sine),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::LeakyRelu => "leaky_relu",
            Activation::Sine => "sine",
        })
    }
}

/// Affine layer `x·W + b` stored in a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    /// Uniform init in `±scale/√fan_in` for weights and biases.
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        group: ParamGroup,
        fan_in: usize,
        fan_out: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = scale / (fan_in.max(1) as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
        };
        let w = Array::matrix(fan_in, fan_out, draw(fan_in * fan_out)).expect("dense weight");
        let b = Array::vector(draw(fan_out));
        Self {
            weight: params.register(format!("{name}.weight"), group, w),
            bias: params.register(format!("{name}.bias"), group, b),
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &Graph, bind: &Binding, x: Var) -> Result<Var, ArrayError> {
        let xw = g.matmul(x, bind.var(self.weight))?;
        g.add(xw, bind.var(self.bias))
    }
}

/// Feed-forward map from a scalar lag to a `d_out × d_in` weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelNetwork {
    pub layers: Vec<Dense>,
    pub activation: Activation,
    pub d_in: usize,
    pub d_out: usize,
}

impl KernelNetwork {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        group: ParamGroup,
        d_in: usize,
        d_out: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut widths = vec![1];
        widths.extend_from_slice(hidden);
        widths.push(d_out * d_in);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                // the output layer produces a d_out×d_in map applied to
                // d_in-dimensional inputs, so its scale also carries 1/√d_in
                let scale = if i == last { 1.0 / (d_in as f64).sqrt() } else { 1.0 };
                Dense::new(params, &format!("{name}.{i}"), group, w[0], w[1], scale, rng)
            })
            .collect();
        Self {
            layers,
            activation,
            d_in,
            d_out,
        }
    }

    /// Mask that zeroes negative lags, or `None` when every lag is admissible.
    fn lag_mask(g: &Graph, lags: &[f64]) -> Result<Option<Var>, ArrayError> {
        if !lags.iter().any(|&l| l < 0.0) {
            return Ok(None);
        }
        let mask = lags.iter().map(|&l| if l < 0.0 { 0.0 } else { 1.0 }).collect();
        Ok(Some(g.constant(Array::matrix(lags.len(), 1, mask)?)))
    }

    /// Activations feeding the (linear) output layer, `P × r`, with rows for
    /// negative lags zeroed. Without hidden layers this is the lag itself.
    pub fn hidden(&self, g: &Graph, bind: &Binding, lags: &[f64]) -> Result<Var, ArrayError> {
        let mut x = g.constant(Array::matrix(lags.len(), 1, lags.to_vec())?);
        for layer in &self.layers[..self.layers.len() - 1] {
            x = layer.forward(g, bind, x)?;
            x = self.activation.apply(g, x)?;
        }
        if let Some(mask) = Self::lag_mask(g, lags)? {
            x = g.mul(x, mask)?;
        }
        Ok(x)
    }

    pub fn output_layer(&self) -> &Dense {
        self.layers.last().expect("kernel network has an output layer")
    }

    /// Kernel values for every lag as a `P × (d_in·d_out)` node. Row `p` is
    /// the kernel matrix of lag `p` stored transposed, i.e. entry
    /// `c·d_out + o` maps input channel `c` to output channel `o`. Rows for
    /// negative lags are exactly zero.
    pub fn eval(&self, g: &Graph, bind: &Binding, lags: &[f64]) -> Result<Var, ArrayError> {
        let input = g.constant(Array::matrix(lags.len(), 1, lags.to_vec())?);
        let mut x = input;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, bind, x)?;
            if i + 1 < self.layers.len() {
                x = self.activation.apply(g, x)?;
            }
        }
        if lags.iter().any(|&l| l < 0.0) {
            let mask = lags.iter().map(|&l| if l < 0.0 { 0.0 } else { 1.0 }).collect();
            let mask = g.constant(Array::matrix(lags.len(), 1, mask)?);
            x = g.mul(x, mask)?;
            // 0·(−v) leaves a negative zero; normalize to +0
            x = g.add(x, g.scalar(0.0))?;
        }
        Ok(x)
    }

    /// Numeric kernel matrices, one `d_out × d_in` array per lag.
    pub fn matrices(&self, params: &ParamSet, lags: &[f64]) -> Result<Vec<Array>, ArrayError> {
        let g = Graph::new();
        let bind = params.bind(&g, |_| false);
        let out = g.value(self.eval(&g, &bind, lags)?);
        let width = self.d_out * self.d_in;
        (0..lags.len())
            .map(|p| {
                Array::matrix(self.d_in, self.d_out, out.data()[p * width..(p + 1) * width].to_vec())?
                    .transpose()
            })
            .collect()
    }
}

/// Whether an event exactly at the query time belongs to the query's history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Events with `t_j ≤ t` (used for outputs at event positions).
    Inclusive,
    /// Events with `t_j < t` (left limit; used for intensities).
    Exclusive,
}

/// One continuous convolution: kernel network, kernel size `s`, dilation `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContConvLayer {
    pub kernel: KernelNetwork,
    pub kernel_size: usize,
    pub dilation: usize,
}

/// Convolution terms for a set of query positions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvPlan {
    pub pairs: Vec<ConvPair>,
    pub lags: Vec<f64>,
}

impl ContConvLayer {
    pub fn new(kernel: KernelNetwork, kernel_size: usize, dilation: usize) -> Self {
        assert!(kernel_size >= 1 && dilation >= 1, "kernel size and dilation must be positive");
        Self {
            kernel,
            kernel_size,
            dilation,
        }
    }

    pub fn d_in(&self) -> usize {
        self.kernel.d_in
    }

    pub fn d_out(&self) -> usize {
        self.kernel.d_out
    }

    /// Event indices contributing to a position whose latest admissible
    /// event is `last`: `last, last − d, …` at most `s` of them.
    pub fn window(&self, last: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.kernel_size)
            .map_while(move |m| m.checked_mul(self.dilation))
            .take_while(move |&off| off <= last)
            .map(move |off| last - off)
    }

    /// Pairs and lags for every query time.
    pub fn plan(&self, event_times: &[f64], queries: &[f64], boundary: Boundary) -> ConvPlan {
        let mut plan = ConvPlan::default();
        for (q, &t) in queries.iter().enumerate() {
            let admissible = match boundary {
                Boundary::Inclusive => event_times.partition_point(|&tj| tj <= t),
                Boundary::Exclusive => event_times.partition_point(|&tj| tj < t),
            };
            let Some(last) = admissible.checked_sub(1) else { continue };
            for j in self.window(last) {
                plan.pairs.push(ConvPair { out: q, input: j });
                plan.lags.push(t - event_times[j]);
            }
        }
        plan
    }

    /// `y(t) = Σ_j k(t − t_j) m_j` over the truncated dilated window, one
    /// `d_out` row per query. Queries with no admissible events give zeros.
    pub fn conv_at_queries(
        &self,
        g: &Graph,
        bind: &Binding,
        event_times: &[f64],
        feats: Var,
        queries: &[f64],
        boundary: Boundary,
    ) -> Result<Var, ArrayError> {
        let shape = g.shape(feats);
        if shape.len() != 2 || shape[0] != event_times.len() || shape[1] != self.d_in() {
            return Err(ArrayError::Shape(format!(
                "features {shape:?} do not match {} events × d_in {}",
                event_times.len(),
                self.d_in()
            )));
        }
        // The output layer is affine in the hidden activations h, so
        // Σ_j (W·h_j + b) m_j = W·(Σ_j h_j ⊗ m_j) + b·Σ_j m_j, which avoids
        // materializing a d_out × d_in matrix per pair.
        let plan = self.plan(event_times, queries, boundary);
        let q = queries.len();
        let (d_in, d_out) = (self.d_in(), self.d_out());
        let h = self.kernel.hidden(g, bind, &plan.lags)?;
        let r = g.shape(h)[1];
        let ones = match KernelNetwork::lag_mask(g, &plan.lags)? {
            Some(mask) => mask,
            None => g.constant(Array::full(&[plan.lags.len(), 1], 1.0)),
        };
        let out = self.kernel.output_layer();
        let w = g.reshape(bind.var(out.weight), &[r * d_in, d_out])?;
        let b = g.reshape(bind.var(out.bias), &[d_in, d_out])?;
        let z = g.pair_outer_sum(h, feats, plan.pairs.clone(), q)?;
        let s = g.pair_outer_sum(ones, feats, plan.pairs, q)?;
        let zw = g.matmul(z, w)?;
        let sb = g.matmul(s, b)?;
        g.add(zw, sb)
    }

    /// Outputs at the event times themselves (each event sees itself at lag 0).
    pub fn conv_at_events(
        &self,
        g: &Graph,
        bind: &Binding,
        event_times: &[f64],
        feats: Var,
    ) -> Result<Var, ArrayError> {
        self.conv_at_queries(g, bind, event_times, feats, event_times, Boundary::Inclusive)
    }
}

/// Number of events (including itself) that can influence an event's output
/// through a stack with the given kernel sizes and dilations.
pub fn receptive_field(layers: &[(usize, usize)]) -> usize {
    1 + layers.iter().map(|&(s, d)| (s - 1) * d).sum::<usize>()
}
