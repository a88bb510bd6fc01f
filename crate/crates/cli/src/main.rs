//! `cotic`: simulate, train, evaluate and inspect continuous-convolution
//! event models.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
//! divergence, 1 anything else.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cotic_core::{Activation, SweepAxis};

use crate::config::{Normalize, RunConfig};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "cotic", version, about = "Continuous convolutional models of marked event sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate exponential-kernel Hawkes sequences into an event CSV.
    Generate(GenerateArgs),
    /// Split a dataset 8:1:1, train, and write checkpoint plus history.
    Train(TrainArgs),
    /// Score a checkpoint on an event CSV.
    Evaluate(EvaluateArgs),
    /// Write one sequence's intensity on a uniform grid as CSV.
    ExportIntensity(ExportArgs),
    /// Train and evaluate one model per value of a hyperparameter.
    Sweep(SweepArgs),
}

/// Flags shared by every command.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Comma-separated mark probabilities.
    #[arg(long, value_delimiter = ',')]
    marks: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, short = 'n')]
    n_sequences: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Data, model and optimizer flags shared by `train` and `sweep`.
#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Time normalization: max_time or none.
    #[arg(long)]
    normalize: Option<Normalize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_mc: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    dilation: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Kernel activation: leaky_relu or sine.
    #[arg(long)]
    activation: Option<Activation>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    n_mc: Option<usize>,
    /// Report path (default: <out_dir>/metrics.json).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sequence to export (default: the first one in the file).
    #[arg(long)]
    seq_id: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    /// Curve path (default: <out_dir>/intensity.csv).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    fit: FitArgs,
    /// layers, kernel_size or activation.
    #[arg(long)]
    axis: Option<SweepAxis>,
    /// Comma-separated values for the axis.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
    #[arg(long)]
    eval_n_mc: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn base_config(common: &Common, command: &str) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.check_command(command)?;
    cfg.command = Some(command.to_string());
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
        cfg.model.init_seed = seed;
    }
    set(&mut cfg.out_dir, common.out_dir.clone());
    Ok(cfg)
}

fn apply_fit(cfg: &mut RunConfig, fit: FitArgs) {
    if fit.data.is_some() {
        cfg.data.path = fit.data;
    }
    set(&mut cfg.data.normalize, fit.normalize);
    set(&mut cfg.train.epochs, fit.epochs);
    set(&mut cfg.train.warmup_epochs, fit.warmup_epochs);
    set(&mut cfg.train.batch_size, fit.batch_size);
    set(&mut cfg.train.lr, fit.lr);
    set(&mut cfg.train.n_mc, fit.n_mc);
    set(&mut cfg.train.patience, fit.patience);
    set(&mut cfg.model.num_layers, fit.layers);
    set(&mut cfg.model.kernel_size, fit.kernel_size);
    set(&mut cfg.model.dilation, fit.dilation);
    set(&mut cfg.model.embedding_dim, fit.embedding_dim);
    set(&mut cfg.model.hidden_dim, fit.hidden_dim);
    set(&mut cfg.model.activation, fit.activation);
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => {
            let mut cfg = base_config(&args.common, "generate")?;
            let g = &mut cfg.generate;
            set(&mut g.mu, args.mu);
            set(&mut g.a, args.a);
            set(&mut g.b, args.b);
            set(&mut g.mark_probs, args.marks);
            set(&mut g.horizon, args.horizon);
            set(&mut g.n_sequences, args.n_sequences);
            set(&mut g.out, args.out);
            commands::generate(&cfg)
        }
        Command::Train(args) => {
            let mut cfg = base_config(&args.common, "train")?;
            apply_fit(&mut cfg, args.fit);
            commands::train(&cfg)
        }
        Command::Evaluate(args) => {
            let mut cfg = base_config(&args.common, "evaluate")?;
            if args.checkpoint.is_some() {
                cfg.evaluate.checkpoint = args.checkpoint;
            }
            if args.data.is_some() {
                cfg.data.path = args.data;
            }
            set(&mut cfg.evaluate.n_mc, args.n_mc);
            if args.out.is_some() {
                cfg.evaluate.out = args.out;
            }
            commands::evaluate(&cfg)
        }
        Command::ExportIntensity(args) => {
            let mut cfg = base_config(&args.common, "export-intensity")?;
            if args.checkpoint.is_some() {
                cfg.evaluate.checkpoint = args.checkpoint;
            }
            if args.data.is_some() {
                cfg.data.path = args.data;
            }
            if args.seq_id.is_some() {
                cfg.evaluate.seq_id = args.seq_id;
            }
            set(&mut cfg.evaluate.grid_size, args.grid);
            if args.out.is_some() {
                cfg.evaluate.out = args.out;
            }
            commands::export_intensity(&cfg)
        }
        Command::Sweep(args) => {
            let mut cfg = base_config(&args.common, "sweep")?;
            apply_fit(&mut cfg, args.fit);
            set(&mut cfg.sweep.axis, args.axis);
            set(&mut cfg.sweep.values, args.values);
            set(&mut cfg.evaluate.n_mc, args.eval_n_mc);
            commands::sweep(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
