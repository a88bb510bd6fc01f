use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cotic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotic"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Small and fast; `--layers` comes last so sweeps can drop it.
const TINY_MODEL: &[&str] = &[
    "--epochs", "2", "--warmup-epochs", "1", "--n-mc", "10",
    "--embedding-dim", "4", "--hidden-dim", "4", "--layers", "1",
];
const TINY_FIT: &[&str] = TINY_MODEL.split_at(TINY_MODEL.len() - 2).0;

/// Generates a small two-mark dataset and trains on it into `run/`.
fn trained(dir: &Path) {
    ok(&cotic(dir, &["generate", "-n", "20", "--horizon", "15", "--marks", "0.5,0.5", "--seed", "1", "-o", "ev.csv"]));
    let mut args = vec!["train", "--data", "ev.csv", "--out-dir", "run"];
    args.extend_from_slice(TINY_MODEL);
    ok(&cotic(dir, &args));
}

#[test]
fn generate_is_deterministic_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["a.csv", "b.csv"] {
        ok(&cotic(d, &["generate", "-n", "5", "--horizon", "10", "--seed", "4", "-o", name]));
    }
    assert_eq!(read(d, "a.csv"), read(d, "b.csv"));
    let echo = read(d, "a.config.toml");
    assert!(echo.contains("command = \"generate\""), "{echo}");
    assert!(echo.contains("seed = 4"), "{echo}");

    ok(&cotic(d, &["generate", "-n", "5", "--horizon", "10", "--seed", "5", "-o", "c.csv"]));
    assert_ne!(read(d, "a.csv"), read(d, "c.csv"));
}

#[test]
fn generate_zero_horizon_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cotic(dir.path(), &["generate", "-n", "1", "--horizon", "0", "-o", "e.csv"]));
    assert_eq!(read(dir.path(), "e.csv"), "seq_id,time,event_type\n");
}

#[test]
fn generated_poisson_count_matches_rate() {
    // a = 0 is a Poisson process: 100 sequences of rate 1 over 10 time units
    let dir = tempfile::tempdir().unwrap();
    ok(&cotic(
        dir.path(),
        &["generate", "--mu", "1", "--a", "0", "-n", "100", "--horizon", "10", "-o", "p.csv"],
    ));
    let rows = read(dir.path(), "p.csv").lines().count() - 1;
    assert!((rows as f64 - 1000.0).abs() <= 3.0 * 1000f64.sqrt(), "{rows} events");
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    for name in ["model.ckpt", "history.jsonl", "model.config.toml", "test.csv"] {
        assert!(d.join("run").join(name).exists(), "missing {name}");
    }
    let history = read(d, "run/history.jsonl");
    assert_eq!(history.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(history.lines().next().unwrap()).unwrap();
    assert!(first["train_nll"].as_f64().unwrap().is_finite());

    let mut args = vec!["train", "--data", "ev.csv", "--out-dir", "run2"];
    args.extend_from_slice(TINY_MODEL);
    ok(&cotic(d, &args));
    assert_eq!(history, read(d, "run2/history.jsonl"));
    assert_eq!(fs::read(d.join("run/model.ckpt")).unwrap(), fs::read(d.join("run2/model.ckpt")).unwrap());
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    let echo = read(d, "run/model.config.toml").replace("out_dir = \"run\"", "out_dir = \"again\"");
    fs::write(d.join("again.toml"), echo).unwrap();
    ok(&cotic(d, &["train", "--config", "again.toml"]));
    assert_eq!(read(d, "run/history.jsonl"), read(d, "again/history.jsonl"));
}

#[test]
fn evaluate_and_export_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);

    let out = cotic(d, &["evaluate", "--checkpoint", "run/model.ckpt", "--data", "run/test.csv", "--n-mc", "20", "--out-dir", "run"]);
    ok(&out);
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&read(d, "run/metrics.json")).unwrap();
    assert_eq!(printed, saved);
    for key in ["ll_per_event", "return_mae", "return_mae_raw", "type_accuracy", "n_predictions", "n_events", "n_sequences"] {
        assert!(saved.get(key).is_some(), "missing {key}");
    }
    assert!(saved["ll_per_event"].as_f64().unwrap().is_finite());
    assert!(d.join("run/metrics.config.toml").exists());

    ok(&cotic(d, &["export-intensity", "--checkpoint", "run/model.ckpt", "--data", "run/test.csv", "--grid", "2", "-o", "curve.csv"]));
    let curve = read(d, "curve.csv");
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "t,lambda_1,lambda_2,lambda_total");
    assert_eq!(lines.len(), 3);
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert!(first[1..].iter().all(|&v| v > 0.0));
    assert!((first[1] + first[2] - first[3]).abs() <= 1e-12 * first[3]);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&cotic(d, &["generate", "-n", "20", "--horizon", "15", "--seed", "2", "-o", "ev.csv"]));
    let mut args = vec!["sweep", "--data", "ev.csv", "--out-dir", "sw", "--axis", "layers", "--values", "1,2", "--eval-n-mc", "20"];
    args.extend_from_slice(TINY_FIT);
    ok(&cotic(d, &args));
    let csv = read(d, "sw/sweep.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "{csv}");
    assert!(lines[0].starts_with("layers,receptive_field,ll_per_event"));
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
    let table: serde_json::Value = serde_json::from_str(&read(d, "sw/sweep.json")).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
    assert!(d.join("sw/sweep.config.toml").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    assert_eq!(cotic(d, &["generate", "--config", "bad.toml"]).status.code(), Some(2));
    assert_eq!(cotic(d, &["generate", "--bogus"]).status.code(), Some(2));
    assert_eq!(cotic(d, &["train"]).status.code(), Some(2));
    // explosive process: branching ratio above one
    assert_eq!(cotic(d, &["generate", "--a", "2", "--b", "1"]).status.code(), Some(2));
    fs::write(d.join("sweep.toml"), "command = \"sweep\"\n").unwrap();
    assert_eq!(cotic(d, &["train", "--config", "sweep.toml"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.csv"), "seq_id,time,event_type\n0,1.0,zero\n").unwrap();
    assert_eq!(cotic(d, &["train", "--data", "bad.csv"]).status.code(), Some(3));
    fs::write(d.join("nocol.csv"), "id,t\n0,1.0\n").unwrap();
    assert_eq!(cotic(d, &["train", "--data", "nocol.csv"]).status.code(), Some(3));

    // checkpoint trained with K = 2, data containing type 3
    trained(d);
    fs::write(d.join("k3.csv"), "seq_id,time,event_type\n0,1.0,1\n0,2.0,3\n").unwrap();
    let out = cotic(d, &["evaluate", "--checkpoint", "run/model.ckpt", "--data", "k3.csv"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(d.join("junk.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(cotic(d, &["evaluate", "--checkpoint", "junk.ckpt", "--data", "ev.csv"]).status.code(), Some(3));
}

#[test]
fn divergence_exits_4_and_keeps_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&cotic(d, &["generate", "-n", "20", "--horizon", "15", "-o", "ev.csv"]));
    let mut args = vec!["train", "--data", "ev.csv", "--out-dir", "run", "--lr", "1e300"];
    args.extend_from_slice(TINY_MODEL);
    let out = cotic(d, &args);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("run/model.ckpt").exists());
    assert!(d.join("run/history.jsonl").exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("file"), "x").unwrap();
    let out = cotic(d, &["generate", "-n", "1", "--horizon", "1", "-o", "file/sub/e.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_rows_equal_separate_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&cotic(d, &["generate", "-n", "20", "--horizon", "15", "--marks", "0.5,0.5", "--seed", "2", "-o", "ev.csv"]));
    let shared = ["--data", "ev.csv", "--normalize", "none", "--seed", "3"];

    let mut args = vec!["sweep", "--out-dir", "sw", "--axis", "layers", "--values", "1,2", "--eval-n-mc", "20"];
    args.extend_from_slice(&shared);
    args.extend_from_slice(TINY_FIT);
    ok(&cotic(d, &args));
    let table: serde_json::Value = serde_json::from_str(&read(d, "sw/sweep.json")).unwrap();

    for (row, layers) in table["rows"].as_array().unwrap().iter().zip(["1", "2"]) {
        let out_dir = format!("l{layers}");
        let mut args = vec!["train", "--out-dir", &out_dir, "--layers", layers];
        args.extend_from_slice(&shared);
        args.extend_from_slice(TINY_FIT);
        ok(&cotic(d, &args));
        let ckpt = format!("{out_dir}/model.ckpt");
        let test = format!("{out_dir}/test.csv");
        let out = cotic(d, &["evaluate", "--checkpoint", &ckpt, "--data", &test, "--n-mc", "20", "--seed", "3", "--out-dir", &out_dir]);
        ok(&out);
        let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(row["metrics"], metrics, "layers = {layers}");
    }
}
