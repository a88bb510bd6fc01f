//! Run configuration: one TOML file, every key optional, unknown keys
//! rejected. Command-line flags are applied on top.

use std::fs;
use std::path::{Path, PathBuf};

use cotic_core::{CsvSchema, HawkesParams, ModelConfig, SweepAxis, TimeScale, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Command this config was written for; checked when present.
    pub command: Option<String>,
    /// Seed for simulation, splitting and evaluation.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    pub evaluate: EvaluateConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            out_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            generate: GenerateConfig::default(),
            evaluate: EvaluateConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    /// Divide times by the largest time in the file.
    #[default]
    MaxTime,
    /// Keep raw time units.
    None,
}

impl std::str::FromStr for Normalize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max_time" => Ok(Normalize::MaxTime),
            "none" => Ok(Normalize::None),
            other => Err(format!("unknown normalization {other:?} (expected max_time or none)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub normalize: Normalize,
    pub seq_id_column: String,
    pub time_column: String,
    pub type_column: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        let schema = CsvSchema::default();
        Self {
            path: None,
            normalize: Normalize::default(),
            seq_id_column: schema.seq_id,
            time_column: schema.time,
            type_column: schema.event_type,
        }
    }
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            seq_id: self.seq_id_column.clone(),
            time: self.time_column.clone(),
            event_type: self.type_column.clone(),
        }
    }

    pub fn time_scale(&self) -> TimeScale {
        match self.normalize {
            Normalize::MaxTime => TimeScale::MaxTime,
            Normalize::None => TimeScale::Fixed(1.0),
        }
    }

    pub fn require_path(&self) -> Result<&Path, CliError> {
        self.path
            .as_deref()
            .ok_or_else(|| CliError::Config("no data file given (data.path or --data)".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    /// Mark distribution; empty means a single event type.
    pub mark_probs: Vec<f64>,
    pub horizon: f64,
    pub n_sequences: usize,
    pub out: PathBuf,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            mu: 0.2,
            a: 0.8,
            b: 1.0,
            mark_probs: Vec::new(),
            horizon: 100.0,
            n_sequences: 400,
            out: PathBuf::from("events.csv"),
        }
    }
}

impl GenerateConfig {
    pub fn params(&self) -> HawkesParams {
        HawkesParams::new(self.mu, self.a, self.b).with_marks(self.mark_probs.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub checkpoint: Option<PathBuf>,
    pub n_mc: usize,
    pub grid_size: usize,
    pub seq_id: Option<String>,
    pub out: Option<PathBuf>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            n_mc: 1000,
            grid_size: 200,
            seq_id: None,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Layers,
            values: vec!["1".into(), "2".into(), "3".into(), "4".into()],
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes this config as `<stem>.config.toml` next to `artifact`.
    pub fn echo_beside(&self, artifact: &Path) -> Result<PathBuf, CliError> {
        let stem = artifact.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        let path = artifact.with_file_name(format!("{stem}.config.toml"));
        fs::write(&path, self.to_toml())?;
        Ok(path)
    }

    /// Rejects a config written for a different command.
    pub fn check_command(&self, command: &str) -> Result<(), CliError> {
        match &self.command {
            Some(c) if c != command => Err(CliError::Config(format!(
                "config was written for `{c}`, not `{command}`"
            ))),
            _ => Ok(()),
        }
    }
}
