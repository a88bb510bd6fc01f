//! Intensity export against the closed-form oracle, sweep bookkeeping and
//! the improvement property.

mod common;

use cotic_core::evaluation::{ablation_sweep, evaluate, export_intensity, write_curve_csv, SweepAxis, SweepData};
use cotic_core::events::Dataset;
use cotic_core::model::{CoticModel, DilationSchedule};
use cotic_core::oracle::{hawkes_intensity, simulate_dataset, HawkesParams};
use cotic_core::training::{train, TrainConfig};

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        warmup_epochs: 1,
        batch_size: 4,
        n_mc: 10,
        lr: 1e-2,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn toy_splits() -> (Dataset, Dataset, Dataset) {
    let params = HawkesParams::new(0.5, 0.5, 1.0).with_marks(vec![0.5, 0.5]);
    let all = simulate_dataset(&params, 8.0, 16, 3).unwrap();
    let train = all.subset(all.sequences[..10].to_vec());
    let val = all.subset(all.sequences[10..13].to_vec());
    let test = all.subset(all.sequences[13..].to_vec());
    (train, val, test)
}

#[test]
fn oracle_export_matches_closed_form() {
    let params = HawkesParams::new(0.3, 0.6, 1.5).with_marks(vec![0.25, 0.75]);
    let data = simulate_dataset(&params, 30.0, 3, 11).unwrap();
    let seq = data.sequences.iter().find(|s| s.len() > 3).unwrap();
    let curve = export_intensity(&params, seq, 50).unwrap();
    assert_eq!(curve.times.len(), 50);
    assert_eq!(curve.times[0], 0.0);
    assert_eq!(*curve.times.last().unwrap(), seq.last_time().unwrap());
    for (t, row) in curve.times.iter().zip(&curve.values) {
        let lam = hawkes_intensity(&params, seq.times(), *t);
        assert!((row[0] - 0.25 * lam).abs() <= 1e-12 * lam);
        assert!((row[1] - 0.75 * lam).abs() <= 1e-12 * lam);
    }

    let mut buf = Vec::new();
    write_curve_csv(&curve, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] + v[2] - v[3]).abs() <= 1e-12 * v[3].max(1.0));
    }
}

#[test]
fn single_value_sweep_equals_direct_run() {
    let (train_set, val, test) = toy_splits();
    let base = common::small_config(2, 2, 3, 9);
    let cfg = quick();
    let data = SweepData { train: &train_set, val: &val, test: &test };
    let table = ablation_sweep(&base, &cfg, SweepAxis::Layers, &["2".into()], &data, 30).unwrap();
    assert_eq!(table.rows.len(), 1);

    let outcome = train(&CoticModel::new(base.clone()).unwrap(), &train_set, &val, &cfg, None).unwrap();
    let direct = evaluate(&outcome.model, &test, 30, cfg.seed).unwrap();
    assert_eq!(table.rows[0].metrics.as_ref(), Some(&direct));
    assert_eq!(table.rows[0].best_epoch, outcome.best_epoch);
    assert_eq!(table.rows[0].receptive_field, Some(base.receptive_field()));
}

#[test]
fn layer_sweep_reports_receptive_field() {
    let (train_set, val, test) = toy_splits();
    let mut base = common::small_config(2, 1, 3, 9);
    base.dilation = 2;
    base.dilation_schedule = DilationSchedule::Fixed;
    let cfg = TrainConfig { epochs: 1, warmup_epochs: 1, ..quick() };
    let data = SweepData { train: &train_set, val: &val, test: &test };
    let values: Vec<String> = ["1", "2", "3"].map(String::from).to_vec();
    let table = ablation_sweep(&base, &cfg, SweepAxis::Layers, &values, &data, 10).unwrap();
    assert_eq!(table.rows.len(), 3);
    for (l, row) in (1..=3).zip(&table.rows) {
        assert_eq!(row.receptive_field, Some(1 + l * (3 - 1) * 2));
        assert!(row.error.is_none());
    }
}

#[test]
fn both_activations_give_finite_metrics() {
    let (train_set, val, test) = toy_splits();
    let base = common::small_config(2, 2, 3, 9);
    let data = SweepData { train: &train_set, val: &val, test: &test };
    let values = vec!["leaky_relu".to_string(), "sine".to_string()];
    let table = ablation_sweep(&base, &quick(), SweepAxis::Activation, &values, &data, 20).unwrap();
    for row in &table.rows {
        let m = row.metrics.as_ref().unwrap_or_else(|| panic!("{}: {:?}", row.value, row.error));
        assert!(m.ll_per_event.is_finite());
        assert!(m.return_mae.unwrap().is_finite());
        assert!((0.0..=1.0).contains(&m.type_accuracy.unwrap()));
    }
}

#[test]
fn failing_cell_does_not_abort_sweep() {
    let (train_set, val, test) = toy_splits();
    let base = common::small_config(2, 1, 3, 9);
    let cfg = TrainConfig { epochs: 1, warmup_epochs: 1, ..quick() };
    let data = SweepData { train: &train_set, val: &val, test: &test };
    let values: Vec<String> = ["40", "many", "1"].map(String::from).to_vec();
    let table = ablation_sweep(&base, &cfg, SweepAxis::Layers, &values, &data, 10).unwrap();
    assert!(table.rows[0].error.is_some() && table.rows[0].metrics.is_none());
    assert!(table.rows[1].error.is_some());
    assert!(table.rows[2].metrics.is_some(), "{:?}", table.rows[2].error);
    assert!(ablation_sweep(&base, &cfg, SweepAxis::Layers, &[], &data, 10).is_err());
}

#[test]
fn training_improves_ll_on_unit_poisson() {
    let all = simulate_dataset(&HawkesParams::poisson(1.0), 20.0, 40, 21).unwrap();
    let train_set = all.subset(all.sequences[..32].to_vec());
    let val = all.subset(all.sequences[32..36].to_vec());
    let test = all.subset(all.sequences[36..].to_vec());
    let model = common::small_model(1, 1, 3, 4);
    let cfg = TrainConfig { epochs: 15, warmup_epochs: 15, batch_size: 8, ..quick() };

    let before = evaluate(&model, &test, 200, 1).unwrap().ll_per_event;
    let trained = train(&model, &train_set, &val, &cfg, None).unwrap().model;
    let after = evaluate(&trained, &test, 200, 1).unwrap().ll_per_event;
    assert!(after > before, "trained {after} vs untrained {before}");
}
