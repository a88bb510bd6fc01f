//! Reverse-mode gradients against central finite differences.

mod common;

use common::{grad_pair, max_rel_err};
use cotic_core::events::EventSequence;
use cotic_core::losses::{sequence_loss, BoundModel, LossWeights, Phase};
use cotic_core::ndarr::{Array, ConvPair, Graph, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn array(shape: &'static [usize], lo: f64, hi: f64) -> impl Strategy<Value = Array> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Array::new(shape.to_vec(), d).unwrap())
}

/// Values bounded away from zero so kinks are never straddled.
fn away_from_zero(shape: &'static [usize]) -> impl Strategy<Value = Array> {
    let n: usize = shape.iter().product();
    prop::collection::vec((0.05f64..2.0, any::<bool>()), n).prop_map(move |d| {
        Array::new(shape.to_vec(), d.into_iter().map(|(v, s)| if s { v } else { -v }).collect()).unwrap()
    })
}

/// Weighted sum with fixed, distinct weights so every output entry matters.
fn reduce(g: &Graph, y: Var) -> Var {
    let shape = g.shape(y);
    let n: usize = shape.iter().product();
    let w = Array::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect()).unwrap();
    let w = g.constant(w);
    let prod = g.mul(y, w).unwrap();
    g.sum(prod)
}

fn assert_close(pairs: Vec<(Vec<f64>, Vec<f64>)>) -> Result<(), TestCaseError> {
    for (i, (a, n)) in pairs.iter().enumerate() {
        let err = max_rel_err(a, n, 1e-3);
        prop_assert!(err < TOL, "input {i}: rel err {err}\nanalytic {a:?}\nnumeric  {n:?}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn matmul(a in array(&[3, 4], -2.0, 2.0), b in array(&[4, 2], -2.0, 2.0)) {
        assert_close(grad_pair(&[a, b], STEP, |g, v| {
            let y = g.matmul(v[0], v[1]).unwrap();
            reduce(g, y)
        }))?;
    }

    #[test]
    fn broadcast_binary(a in array(&[3, 4], -2.0, 2.0), b in array(&[4], 0.5, 2.0), c in array(&[3, 1], 0.5, 2.0)) {
        assert_close(grad_pair(&[a, b, c], STEP, |g, v| {
            let s = g.add(v[0], v[1]).unwrap();
            let d = g.sub(s, v[2]).unwrap();
            let m = g.mul(d, v[1]).unwrap();
            let q = g.div(m, v[2]).unwrap();
            reduce(g, q)
        }))?;
    }

    #[test]
    fn smooth_unary(a in array(&[2, 3], -2.0, 2.0)) {
        assert_close(grad_pair(&[a], STEP, |g, v| {
            let x = g.softplus(v[0]).unwrap();
            let y = g.tanh(x).unwrap();
            let z = g.sin(v[0]).unwrap();
            let e = g.exp(z).unwrap();
            let l = g.log(x).unwrap();
            let s = g.add(y, e).unwrap();
            let s = g.add(s, l).unwrap();
            reduce(g, s)
        }))?;
    }

    #[test]
    fn leaky_relu_and_clamp(a in away_from_zero(&[2, 4])) {
        assert_close(grad_pair(&[a], STEP, |g, v| {
            let x = g.leaky_relu(v[0], 0.01).unwrap();
            let c = g.clamp_min(v[0], 0.0);
            let s = g.add(x, c).unwrap();
            let s = g.scale(s, -1.7);
            reduce(g, s)
        }))?;
    }

    #[test]
    fn reductions_and_indexing(a in array(&[4, 3], -2.0, 2.0)) {
        assert_close(grad_pair(&[a], STEP, |g, v| {
            let rows = g.gather_rows(v[0], &[2, 0, 2]).unwrap();
            let picked = g.pick_per_row(rows, &[1, 0, 2]).unwrap();
            let lsm = g.log_softmax_rows(v[0]).unwrap();
            let per_row = g.sum_last_axis(lsm).unwrap();
            let flat = g.reshape(v[0], &[12]).unwrap();
            let mean = g.mean(flat).unwrap();
            let t1 = reduce(g, picked);
            let t2 = reduce(g, per_row);
            let s = g.add(t1, t2).unwrap();
            g.add(s, mean).unwrap()
        }))?;
    }

    #[test]
    fn pair_outer_sum(h in array(&[5, 2], -2.0, 2.0), f in array(&[3, 3], -2.0, 2.0)) {
        let pairs = vec![
            ConvPair { out: 0, input: 0 },
            ConvPair { out: 1, input: 1 },
            ConvPair { out: 1, input: 0 },
            ConvPair { out: 3, input: 2 },
            ConvPair { out: 3, input: 0 },
        ];
        assert_close(grad_pair(&[h, f], STEP, move |g, v| {
            let z = g.pair_outer_sum(v[0], v[1], pairs.clone(), 4).unwrap();
            reduce(g, z)
        }))?;
    }
}

/// Every parameter gradient of the joint-phase loss of a small model.
#[test]
fn full_model_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = common::small_model(2, 2, 3, 11);
    let seq = common::random_sequence(&mut rng, 6, 2);
    let loss_at = |m: &cotic_core::model::CoticModel, seq: &EventSequence| -> f64 {
        let g = Graph::new();
        let b = BoundModel::new(&g, m, seq, |_| false).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(9);
        sequence_loss(&g, &b, seq, 16, LossWeights::default(), Phase::Joint, &mut r)
            .unwrap()
            .report
            .combined
    };
    let g = Graph::new();
    let b = BoundModel::new(&g, &model, &seq, |_| true).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let loss = sequence_loss(&g, &b, &seq, 16, LossWeights::default(), Phase::Joint, &mut r).unwrap();
    g.backward(loss.combined).unwrap();
    let grads = b.bind.grads(&g);
    for (i, entry) in model.params().entries().iter().enumerate() {
        let analytic = grads[i].as_ref().unwrap().data().to_vec();
        let numeric: Vec<f64> = (0..entry.value.len())
            .map(|j| {
                let mut plus = model.clone();
                plus.params_mut().value_at_mut(i).data_mut()[j] += 1e-5;
                let mut minus = model.clone();
                minus.params_mut().value_at_mut(i).data_mut()[j] -= 1e-5;
                (loss_at(&plus, &seq) - loss_at(&minus, &seq)) / 2e-5
            })
            .collect();
        let err = max_rel_err(&analytic, &numeric, 1e-3);
        assert!(err < 1e-4, "{}: rel err {err}", entry.name);
    }
}
