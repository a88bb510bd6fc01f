//! The full network: mark embeddings, a stack of continuous convolutions,
//! a continuous intensity head and two prediction heads.
//!
//! ```text
//! h_{1:k}   = σ(k_L ∗ σ(… σ(k_1 ∗ m(t)) …))       at event times
//! λ(t)      = softplus(Linear(σ(k_λ ∗ h(t))))     K-vector, any t ≥ 0
//! Δt̂_{k+1} = MLP₁(h_k),   m̂_{k+1} = MLP₂(h_k)
//! ```
//!
//! `σ` is LeakyReLU. The intensity at an event time is its left limit: events
//! at exactly `t` are not part of the history of `λ(t)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{receptive_field, Activation, Boundary, ContConvLayer, Dense, KernelNetwork};
use crate::events::EventSequence;
use crate::ndarr::{Array, ArrayError, Binding, Graph, ParamGroup, ParamId, ParamSet, Var};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid model config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DilationSchedule {
    /// Layer `l` (1-based) uses `dilation · 2^(l−1)`.
    #[default]
    Doubling,
    /// Every layer uses `dilation`.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub num_types: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    pub dilation_schedule: DilationSchedule,
    pub kernel_hidden: Vec<usize>,
    pub activation: Activation,
    /// Defaults to `kernel_size`.
    pub intensity_kernel_size: Option<usize>,
    /// Defaults to `dilation`.
    pub intensity_dilation: Option<usize>,
    pub head_hidden: Vec<usize>,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_types: 1,
            embedding_dim: 32,
            hidden_dim: 32,
            num_layers: 3,
            kernel_size: 5,
            dilation: 1,
            dilation_schedule: DilationSchedule::Doubling,
            kernel_hidden: vec![16, 16],
            activation: Activation::LeakyRelu,
            intensity_kernel_size: None,
            intensity_dilation: None,
            head_hidden: vec![64, 64],
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("num_types", self.num_types),
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("kernel_size", self.kernel_size),
            ("dilation", self.dilation),
            ("intensity_kernel_size", self.intensity_kernel_size.unwrap_or(1)),
            ("intensity_dilation", self.intensity_dilation.unwrap_or(1)),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if self.kernel_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return Err(ModelError::Config("hidden widths must be positive".into()));
        }
        if self.num_layers > 32 {
            return Err(ModelError::Config("at most 32 layers".into()));
        }
        Ok(())
    }

    pub fn layer_dilation(&self, layer: usize) -> usize {
        match self.dilation_schedule {
            DilationSchedule::Doubling => self.dilation << layer,
            DilationSchedule::Fixed => self.dilation,
        }
    }

    /// `(kernel_size, dilation)` of every backbone layer.
    pub fn backbone_windows(&self) -> Vec<(usize, usize)> {
        (0..self.num_layers)
            .map(|l| (self.kernel_size, self.layer_dilation(l)))
            .collect()
    }

    /// Events (including itself) that can affect an event's embedding.
    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.backbone_windows())
    }

    pub fn feature_dim(&self) -> usize {
        if self.num_layers == 0 {
            self.embedding_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Multi-layer perceptron with LeakyReLU between layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    fn new(
        params: &mut ParamSet,
        name: &str,
        widths: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(params, &format!("{name}.{i}"), ParamGroup::Heads, w[0], w[1], 1.0, rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &Graph, bind: &Binding, x: Var) -> Result<Var, ArrayError> {
        let mut x = x;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, bind, x)?;
            if i + 1 < self.layers.len() {
                x = g.leaky_relu(x, LEAKY_SLOPE)?;
            }
        }
        Ok(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoticModel {
    config: ModelConfig,
    params: ParamSet,
    embedding: ParamId,
    layers: Vec<ContConvLayer>,
    intensity_conv: ContConvLayer,
    intensity_out: Dense,
    time_head: Mlp,
    type_head: Mlp,
}

/// Per-type intensities on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityCurve {
    pub times: Vec<f64>,
    /// `times.len()` rows of `K` intensities.
    pub values: Vec<Vec<f64>>,
}

impl IntensityCurve {
    pub fn total(&self) -> Vec<f64> {
        self.values.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn num_types(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Head outputs per event; position `j` predicts event `j + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadPredictions {
    pub return_times: Vec<f64>,
    pub type_scores: Vec<Vec<f64>>,
}

impl CoticModel {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamSet::new();
        let k = config.num_types;

        let table: Vec<f64> = (0..k * config.embedding_dim)
            .map(|_| rand::Rng::gen_range(&mut rng, -1.0..=1.0))
            .collect();
        let embedding = params.register(
            "embedding",
            ParamGroup::Backbone,
            Array::matrix(k, config.embedding_dim, table)?,
        );

        let mut layers = Vec::with_capacity(config.num_layers);
        let mut d_in = config.embedding_dim;
        for l in 0..config.num_layers {
            let kernel = KernelNetwork::new(
                &mut params,
                &format!("conv{l}.kernel"),
                ParamGroup::Backbone,
                d_in,
                config.hidden_dim,
                &config.kernel_hidden,
                config.activation,
                &mut rng,
            );
            layers.push(ContConvLayer::new(kernel, config.kernel_size, config.layer_dilation(l)));
            d_in = config.hidden_dim;
        }

        let feat = config.feature_dim();
        let kernel = KernelNetwork::new(
            &mut params,
            "intensity.kernel",
            ParamGroup::Intensity,
            feat,
            config.hidden_dim,
            &config.kernel_hidden,
            config.activation,
            &mut rng,
        );
        let intensity_conv = ContConvLayer::new(
            kernel,
            config.intensity_kernel_size.unwrap_or(config.kernel_size),
            config.intensity_dilation.unwrap_or(config.dilation),
        );
        let intensity_out = Dense::new(
            &mut params,
            "intensity.linear",
            ParamGroup::Intensity,
            config.hidden_dim,
            k,
            1.0,
            &mut rng,
        );

        let widths = |out: usize| {
            let mut w = vec![feat];
            w.extend_from_slice(&config.head_hidden);
            w.push(out);
            w
        };
        let time_head = Mlp::new(&mut params, "time_head", &widths(1), &mut rng);
        let type_head = Mlp::new(&mut params, "type_head", &widths(k), &mut rng);

        Ok(Self {
            config,
            params,
            embedding,
            layers,
            intensity_conv,
            intensity_out,
            time_head,
            type_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_types(&self) -> usize {
        self.config.num_types
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn layers(&self) -> &[ContConvLayer] {
        &self.layers
    }

    pub fn intensity_conv(&self) -> &ContConvLayer {
        &self.intensity_conv
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }

    pub fn time_head(&self) -> &Mlp {
        &self.time_head
    }

    pub fn type_head(&self) -> &Mlp {
        &self.type_head
    }

    pub fn intensity_linear(&self) -> &Dense {
        &self.intensity_out
    }

    /// Embedding rows for 1-based marks.
    pub fn embed_marks(&self, g: &Graph, bind: &Binding, marks: &[usize]) -> Result<Var, ModelError> {
        let k = self.config.num_types;
        let rows = marks
            .iter()
            .map(|&m| {
                if (1..=k).contains(&m) {
                    Ok(m - 1)
                } else {
                    Err(ModelError::Domain(format!("mark {m} outside 1..={k}")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(g.gather_rows(bind.var(self.embedding), &rows)?)
    }

    /// Per-event embeddings `h_{1:k}` (`k × d`).
    pub fn backbone(&self, g: &Graph, bind: &Binding, seq: &EventSequence) -> Result<Var, ModelError> {
        let mut h = self.embed_marks(g, bind, seq.marks())?;
        for layer in &self.layers {
            let y = layer.conv_at_events(g, bind, seq.times(), h)?;
            h = g.leaky_relu(y, LEAKY_SLOPE)?;
        }
        Ok(h)
    }

    /// `Q × K` intensities at `queries` given backbone embeddings `h`.
    pub fn intensity_at(
        &self,
        g: &Graph,
        bind: &Binding,
        seq: &EventSequence,
        h: Var,
        queries: &[f64],
    ) -> Result<Var, ModelError> {
        if let Some(&q) = queries.iter().find(|&&q| !(q >= 0.0)) {
            return Err(ModelError::Domain(format!("query time {q} is negative")));
        }
        let y = self
            .intensity_conv
            .conv_at_queries(g, bind, seq.times(), h, queries, Boundary::Exclusive)?;
        let y = g.leaky_relu(y, LEAKY_SLOPE)?;
        let z = self.intensity_out.forward(g, bind, y)?;
        Ok(g.softplus(z)?)
    }

    /// Return-time (`k × 1`) and type-score (`k × K`) head outputs.
    pub fn heads(&self, g: &Graph, bind: &Binding, h: Var) -> Result<(Var, Var), ModelError> {
        Ok((
            self.time_head.forward(g, bind, h)?,
            self.type_head.forward(g, bind, h)?,
        ))
    }

    /// Numeric embeddings, one row per event.
    pub fn embeddings(&self, seq: &EventSequence) -> Result<Array, ModelError> {
        let g = Graph::new();
        let bind = self.params.bind(&g, |_| false);
        let h = self.backbone(&g, &bind, seq)?;
        Ok(g.value(h))
    }

    pub fn intensity(&self, seq: &EventSequence, queries: &[f64]) -> Result<IntensityCurve, ModelError> {
        let g = Graph::new();
        let bind = self.params.bind(&g, |_| false);
        let h = self.backbone(&g, &bind, seq)?;
        let lam = g.value(self.intensity_at(&g, &bind, seq, h, queries)?);
        let k = self.config.num_types;
        Ok(IntensityCurve {
            times: queries.to_vec(),
            values: lam.data().chunks(k).map(<[f64]>::to_vec).collect(),
        })
    }

    pub fn predict_heads(&self, seq: &EventSequence) -> Result<HeadPredictions, ModelError> {
        let g = Graph::new();
        let bind = self.params.bind(&g, |_| false);
        let h = self.backbone(&g, &bind, seq)?;
        let (dt, scores) = self.heads(&g, &bind, h)?;
        let k = self.config.num_types;
        Ok(HeadPredictions {
            return_times: g.value(dt).into_data(),
            type_scores: g.value(scores).data().chunks(k).map(<[f64]>::to_vec).collect(),
        })
    }
}
