use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cotic_core::{
    ablation_sweep, evaluate as score, export_intensity as curve_on_grid, load_checkpoint, load_csv_scaled,
    simulate_dataset, split, write_csv, write_curve_csv, CoticModel, Dataset, SplitRatios, StopReason, SweepData,
    TimeScale,
};

use crate::config::RunConfig;
use crate::error::CliError;

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn out_path(cfg: &RunConfig, explicit: Option<&PathBuf>, default_name: &str) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| cfg.out_dir.join(default_name))
}

fn load_data(cfg: &RunConfig, scale: TimeScale) -> Result<Dataset, CliError> {
    let path = cfg.data.require_path()?;
    Ok(load_csv_scaled(path, &cfg.data.schema(), scale)?)
}

/// Loads the data and splits it 8:1:1 with the run seed.
fn load_split(cfg: &RunConfig) -> Result<(Dataset, Dataset, Dataset, usize), CliError> {
    let mut data = load_data(cfg, cfg.data.time_scale())?;
    let k = cfg.model.num_types.max(data.num_types);
    data.num_types = k;
    let (train, val, test) = split(&data, SplitRatios::default(), cfg.seed)?;
    Ok((train, val, test, k))
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let g = &cfg.generate;
    let params = g.params();
    params.validate_stable()?;
    if !(g.horizon >= 0.0) || !g.horizon.is_finite() {
        return Err(CliError::Config(format!("horizon must be finite and >= 0, got {}", g.horizon)));
    }
    let data = simulate_dataset(&params, g.horizon, g.n_sequences, cfg.seed)?;
    create_parent(&g.out)?;
    write_csv(&data, &g.out)?;
    cfg.echo_beside(&g.out)?;
    eprintln!(
        "wrote {} sequences, {} events to {}",
        data.len(),
        data.num_events(),
        g.out.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let (train_set, val_set, test_set, k) = load_split(cfg)?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.num_types = k;
    let model = CoticModel::new(model_cfg.clone())?;

    fs::create_dir_all(&cfg.out_dir)?;
    let ckpt = cfg.out_dir.join("model.ckpt");
    let mut echo = cfg.clone();
    echo.model = model_cfg;
    echo.echo_beside(&ckpt)?;
    write_csv(&test_set, cfg.out_dir.join("test.csv"))?;

    eprintln!(
        "training on {} sequences ({} val, {} test), K = {k}, receptive field {}",
        train_set.len(),
        val_set.len(),
        test_set.len(),
        model.config().receptive_field()
    );
    let outcome = cotic_core::train_with_progress(&model, &train_set, &val_set, &cfg.train, Some(&ckpt), |r| {
        eprintln!(
            "epoch {:>4} {:?}  train nll {:.4}  val nll {:.4}  time {:.4}  type {:.4}  {:.1}s",
            r.epoch, r.phase, r.train_nll, r.val_nll, r.train_time, r.train_type, r.wall_seconds
        );
    })?;
    fs::write(cfg.out_dir.join("history.jsonl"), outcome.history_jsonl())?;

    match outcome.stop {
        StopReason::Diverged { epoch } => Err(CliError::Diverged {
            epoch,
            checkpoint: ckpt.display().to_string(),
        }),
        stop => {
            eprintln!(
                "{stop:?}; best epoch {:?}, val nll {:.4}; checkpoint {}",
                outcome.best_epoch,
                outcome.best_val_nll,
                ckpt.display()
            );
            Ok(())
        }
    }
}

/// Restores a checkpoint and loads the data in the checkpoint's time units.
fn load_for_checkpoint(cfg: &RunConfig) -> Result<(CoticModel, Dataset, f64), CliError> {
    let path = cfg
        .evaluate
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Config("no checkpoint given (evaluate.checkpoint or --checkpoint)".into()))?;
    let ck = load_checkpoint(path)?;
    let mut data = load_data(cfg, TimeScale::Fixed(ck.time_scale))?;
    ck.check_types(data.num_types)?;
    data.num_types = ck.model.num_types();
    Ok((ck.model, data, ck.time_scale))
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let (model, data, _) = load_for_checkpoint(cfg)?;
    let report = score(&model, &data, cfg.evaluate.n_mc, cfg.seed)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
    let out = out_path(cfg, cfg.evaluate.out.as_ref(), "metrics.json");
    create_parent(&out)?;
    fs::write(&out, format!("{json}\n"))?;
    cfg.echo_beside(&out)?;
    println!("{json}");
    Ok(())
}

pub fn export_intensity(cfg: &RunConfig) -> Result<(), CliError> {
    let (model, data, scale) = load_for_checkpoint(cfg)?;
    let seq = match &cfg.evaluate.seq_id {
        Some(id) => data
            .find(id)
            .ok_or_else(|| CliError::Data(format!("no sequence with id {id:?}")))?,
        None => data.sequences.first().ok_or_else(|| CliError::Data("no sequences in data".into()))?,
    };
    let mut curve = curve_on_grid(&model, seq, cfg.evaluate.grid_size)?;
    // back to raw units: time stretches by the scale, rates shrink by it
    for t in &mut curve.times {
        *t *= scale;
    }
    for row in &mut curve.values {
        for v in row {
            *v /= scale;
        }
    }
    let out = out_path(cfg, cfg.evaluate.out.as_ref(), "intensity.csv");
    create_parent(&out)?;
    let mut w = BufWriter::new(File::create(&out)?);
    write_curve_csv(&curve, &mut w)?;
    w.flush()?;
    cfg.echo_beside(&out)?;
    eprintln!("wrote {} grid points for sequence {} to {}", curve.times.len(), seq.id(), out.display());
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let (train_set, val_set, test_set, k) = load_split(cfg)?;
    let mut base = cfg.model.clone();
    base.num_types = k;
    let data = SweepData {
        train: &train_set,
        val: &val_set,
        test: &test_set,
    };
    let table = ablation_sweep(
        &base,
        &cfg.train,
        cfg.sweep.axis,
        &cfg.sweep.values,
        &data,
        cfg.evaluate.n_mc,
    )?;

    fs::create_dir_all(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join("sweep.csv");
    let mut w = BufWriter::new(File::create(&csv_path)?);
    table.write_csv(&mut w)?;
    w.flush()?;
    let json = serde_json::to_string_pretty(&table).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(cfg.out_dir.join("sweep.json"), format!("{json}\n"))?;
    cfg.echo_beside(&csv_path)?;
    for row in &table.rows {
        match (&row.metrics, &row.error) {
            (Some(m), _) => eprintln!("{} = {}: ll/event {:.4}", table.axis, row.value, m.ll_per_event),
            (None, Some(e)) => eprintln!("{} = {}: failed: {e}", table.axis, row.value),
            (None, None) => {}
        }
    }
    Ok(())
}
