#![allow(dead_code)]

use cotic_core::events::EventSequence;
use cotic_core::model::{CoticModel, ModelConfig};
use cotic_core::ndarr::{Array, Graph, Var};
use rand::Rng;

pub fn small_config(k: usize, layers: usize, s: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        num_types: k,
        embedding_dim: 4,
        hidden_dim: 5,
        num_layers: layers,
        kernel_size: s,
        kernel_hidden: vec![6, 6],
        head_hidden: vec![7],
        init_seed: seed,
        ..ModelConfig::default()
    }
}

pub fn small_model(k: usize, layers: usize, s: usize, seed: u64) -> CoticModel {
    CoticModel::new(small_config(k, layers, s, seed)).unwrap()
}

/// Strictly increasing times with gaps in `[0.05, 1.05)` and uniform marks.
pub fn random_sequence(rng: &mut impl Rng, n: usize, k: usize) -> EventSequence {
    let mut t = 0.0;
    let mut times = Vec::with_capacity(n);
    for _ in 0..n {
        t += 0.05 + rng.gen::<f64>();
        times.push(t);
    }
    let marks = (0..n).map(|_| rng.gen_range(1..=k)).collect();
    EventSequence::observed("r", times, marks).unwrap()
}

/// `max |a − b| / max(|a|, |b|, floor)` over matching entries.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Analytic and central-difference gradients of `f(inputs)` for every
/// input, where `f` builds a scalar on a fresh graph.
pub fn grad_pair(
    inputs: &[Array],
    step: f64,
    f: impl Fn(&Graph, &[Var]) -> Var,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|a| g.param(a.clone())).collect();
    let out = f(&g, &vars);
    g.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| g.grad(v).unwrap().into_data()).collect();

    let eval = |xs: &[Array]| {
        let g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|a| g.constant(a.clone())).collect();
        let out = f(&g, &vars);
        g.item(out).unwrap()
    };
    let mut result = Vec::new();
    for (i, a) in analytic.into_iter().enumerate() {
        let mut numeric = Vec::with_capacity(a.len());
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += step;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= step;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * step));
        }
        result.push((a, numeric));
    }
    result
}
