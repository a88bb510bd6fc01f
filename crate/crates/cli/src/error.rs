use cotic_core::{CheckpointError, EvalError, EventsError, ModelError, OracleError, TrainError};

/// Every failure is classified so the process can exit with a stable code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged at epoch {epoch}; best model so far kept at {checkpoint}")]
    Diverged { epoch: usize, checkpoint: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged { .. } => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<EventsError> for CliError {
    fn from(e: EventsError) -> Self {
        match e {
            EventsError::Io(io) => CliError::Io(io),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(msg) => CliError::Config(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::InvalidParams(_) | OracleError::Unstable(_) => CliError::Config(e.to_string()),
            OracleError::Domain(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(msg) => CliError::Config(msg),
            TrainError::EmptyTrainSet => CliError::Data(e.to_string()),
            TrainError::Checkpoint(c) => c.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::GridTooSmall(_) | EvalError::NoSweepValues | EvalError::SweepValue { .. } => {
                CliError::Config(e.to_string())
            }
            EvalError::EmptyDataset | EvalError::NoEvents => CliError::Data(e.to_string()),
            EvalError::Model(m) => m.into(),
            EvalError::Train(t) => t.into(),
            EvalError::Io(io) => CliError::Io(io),
            other => CliError::Other(other.to_string()),
        }
    }
}
