//! Continuous-time convolutional model of marked event sequences.
//!
//! The crate is organized bottom-up:
//!
//! - [`ndarr`]: dense arrays and reverse-mode differentiation.
//! - [`events`]: event sequences, CSV I/O, splitting and batching.
//! - [`conv`]: continuous causal convolution with kernel networks.
//! - [`model`]: the full network with intensity and prediction heads.
//! - [`losses`]: likelihood with a Monte-Carlo compensator and head losses.
//! - [`training`]: Adam and the two-phase schedule.
//! - [`checkpoint`]: binary model container.
//! - [`oracle`]: Poisson/Hawkes simulation and closed-form likelihoods.
//! - [`evaluation`]: metrics, intensity export and ablation sweeps.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod conv;
pub mod evaluation;
pub mod events;
pub mod losses;
pub mod model;
pub mod ndarr;
pub mod oracle;
pub mod training;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use conv::Activation;
pub use evaluation::{
    ablation_sweep, evaluate, export_intensity, write_curve_csv, EvalError, MetricsReport, SweepAxis, SweepData,
    SweepTable,
};
pub use events::{load_csv_scaled, split, write_csv, CsvSchema, Dataset, EventSequence, EventsError, SplitRatios, TimeScale};
pub use model::{CoticModel, DilationSchedule, ModelConfig, ModelError};
pub use oracle::{simulate_dataset, HawkesParams, OracleError};
pub use training::{train, train_with_progress, EpochRecord, StopReason, TrainConfig, TrainError, TrainOutcome};
