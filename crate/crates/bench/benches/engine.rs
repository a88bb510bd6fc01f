use std::hint::black_box;

use cotic_core::losses::Phase;
use cotic_core::ndarr::{Array, ConvPair, Graph};
use cotic_core::oracle::simulate_hawkes;
use cotic_core::training::batch_gradients;
use cotic_core::{CoticModel, EventSequence, HawkesParams, ModelConfig, TrainConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sequence(n: usize, k: usize) -> EventSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut t = 0.0;
    let (mut times, mut marks) = (Vec::new(), Vec::new());
    for _ in 0..n {
        t += rng.gen_range(0.01..1.0);
        times.push(t);
        marks.push(rng.gen_range(1..=k));
    }
    EventSequence::new("bench", times, marks, t).unwrap()
}

fn model(k: usize) -> CoticModel {
    CoticModel::new(ModelConfig {
        num_types: k,
        ..ModelConfig::default()
    })
    .unwrap()
}

fn gradient_step(c: &mut Criterion) {
    let m = model(2);
    let cfg = TrainConfig::default();
    let mut group = c.benchmark_group("loss_and_gradient");
    for n in [20, 80] {
        let seq = [sequence(n, 2)];
        group.bench_with_input(BenchmarkId::from_parameter(n), &seq, |b, seq| {
            b.iter(|| black_box(batch_gradients(&m, seq, &cfg, Phase::Joint, 0).unwrap()))
        });
    }
    group.finish();
}

fn intensity_grid(c: &mut Criterion) {
    let m = model(2);
    let seq = sequence(80, 2);
    let end = seq.last_time().unwrap();
    let grid: Vec<f64> = (0..200).map(|i| end * i as f64 / 199.0).collect();
    c.bench_function("intensity_200_points", |b| {
        b.iter(|| black_box(m.intensity(&seq, &grid).unwrap()))
    });
}

fn pair_outer_sum(c: &mut Criterion) {
    let (n, r, d): (usize, usize, usize) = (100, 16, 32);
    let window: usize = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs: Vec<ConvPair> = (0..n)
        .flat_map(|out| (out.saturating_sub(window - 1)..=out).map(move |input| ConvPair { out, input }))
        .collect();
    let hidden = Array::new(vec![pairs.len(), r], (0..pairs.len() * r).map(|_| rng.gen()).collect()).unwrap();
    let feats = Array::new(vec![n, d], (0..n * d).map(|_| rng.gen()).collect()).unwrap();
    c.bench_function("pair_outer_sum_forward_backward", |b| {
        b.iter(|| {
            let g = Graph::new();
            let h = g.param(hidden.clone());
            let f = g.param(feats.clone());
            let y = g.pair_outer_sum(h, f, pairs.clone(), n).unwrap();
            let s = g.sum(y);
            g.backward(s).unwrap();
            black_box(g.grad(h))
        })
    });
}

fn simulation(c: &mut Criterion) {
    let params = HawkesParams::new(0.2, 0.8, 1.0).with_marks(vec![0.5, 0.5]);
    c.bench_function("simulate_hawkes_horizon_100", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            black_box(simulate_hawkes(&params, 100.0, seed).unwrap())
        })
    });
}

criterion_group!(benches, gradient_step, intensity_grid, pair_outer_sum, simulation);
criterion_main!(benches);
