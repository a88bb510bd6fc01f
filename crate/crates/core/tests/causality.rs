//! Outputs at a position never depend on later events, and depend on earlier
//! ones only within the receptive field.

mod common;

use cotic_core::events::EventSequence;
use cotic_core::model::{CoticModel, DilationSchedule, ModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Replaces events after `keep` with fresh ones (possibly a different count).
fn perturb_future(seq: &EventSequence, keep: usize, rng: &mut impl Rng, k: usize) -> EventSequence {
    let mut times = seq.times()[..keep].to_vec();
    let mut marks = seq.marks()[..keep].to_vec();
    let mut t = *times.last().unwrap();
    for _ in 0..rng.gen_range(0..6) {
        t += 0.01 + rng.gen::<f64>();
        times.push(t);
        marks.push(rng.gen_range(1..=k));
    }
    EventSequence::observed("p", times, marks).unwrap()
}

fn row_bits(m: &cotic_core::ndarr::Array, rows: usize) -> Vec<u64> {
    let c = m.shape()[1];
    bits(&m.data()[..rows * c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn future_events_do_not_leak(seed in any::<u64>(), n in 2usize..14, cut in 0usize..13, layers in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 3;
        let model = common::small_model(k, layers, 3, seed ^ 1);
        let seq = common::random_sequence(&mut rng, n, k);
        let keep = 1 + cut % (n - 1);
        let other = perturb_future(&seq, keep, &mut rng, k);

        let (a, b) = (model.embeddings(&seq).unwrap(), model.embeddings(&other).unwrap());
        prop_assert_eq!(row_bits(&a, keep), row_bits(&b, keep));

        let (pa, pb) = (model.predict_heads(&seq).unwrap(), model.predict_heads(&other).unwrap());
        prop_assert_eq!(bits(&pa.return_times[..keep]), bits(&pb.return_times[..keep]));
        for i in 0..keep {
            prop_assert_eq!(bits(&pa.type_scores[i]), bits(&pb.type_scores[i]));
        }

        let t_keep = seq.times()[keep - 1];
        let queries: Vec<f64> = (0..8).map(|i| t_keep * i as f64 / 7.0).collect();
        let (la, lb) = (model.intensity(&seq, &queries).unwrap(), model.intensity(&other, &queries).unwrap());
        for (x, y) in la.values.iter().zip(&lb.values) {
            prop_assert_eq!(bits(x), bits(y));
        }
    }

    #[test]
    fn receptive_field_bounds_dependence(
        seed in any::<u64>(),
        layers in 1usize..4,
        s in 2usize..4,
        d in 1usize..3,
    ) {
        let cfg = ModelConfig {
            dilation: d,
            dilation_schedule: DilationSchedule::Fixed,
            ..common::small_config(2, layers, s, seed)
        };
        let rf = cfg.receptive_field();
        prop_assert_eq!(rf, 1 + layers * (s - 1) * d);
        let model = CoticModel::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rf + 4;
        let seq = common::random_sequence(&mut rng, n, 2);
        let target = n - 1;
        let base = model.embeddings(&seq).unwrap();
        let row = |m: &cotic_core::ndarr::Array| bits(m.row(target));

        // changing the mark of an event outside the field leaves the output alone
        let outside = target - rf;
        let mut marks = seq.marks().to_vec();
        marks[outside] = 3 - marks[outside];
        let far = EventSequence::observed("f", seq.times().to_vec(), marks).unwrap();
        prop_assert_eq!(row(&base), row(&model.embeddings(&far).unwrap()));

        // the oldest event inside the field does matter
        let inside = target + 1 - rf;
        let mut marks = seq.marks().to_vec();
        marks[inside] = 3 - marks[inside];
        let near = EventSequence::observed("n", seq.times().to_vec(), marks).unwrap();
        prop_assert_ne!(row(&base), row(&model.embeddings(&near).unwrap()));
    }
}
