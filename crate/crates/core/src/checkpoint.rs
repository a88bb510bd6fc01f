//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `COTICKPT`, a little-endian `u32` format
//! version, a `u64` header length, a JSON header (model config, time scale,
//! parameter names, groups and shapes), every parameter as raw little-endian
//! `f64`, and a SHA-256 digest of all preceding bytes. Values are stored bit
//! for bit, so save, load, save reproduces the same file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{CoticModel, ModelConfig, ModelError};
use crate::ndarr::ParamGroup;

pub const MAGIC: &[u8; 8] = b"COTICKPT";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint parameters do not match the model layout: {0}")]
    Layout(String),
    #[error("data has event type {data_max} but the checkpoint model has {model_types} types")]
    TypeMismatch { data_max: usize, model_types: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    group: ParamGroup,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    time_scale: f64,
    params: Vec<ParamHeader>,
}

/// A restored model plus the time scale its training data used.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: CoticModel,
    pub time_scale: f64,
}

impl Checkpoint {
    /// Errors if the data uses a mark the model cannot score.
    pub fn check_types(&self, data_max_mark: usize) -> Result<(), CheckpointError> {
        let k = self.model.num_types();
        if data_max_mark > k {
            return Err(CheckpointError::TypeMismatch {
                data_max: data_max_mark,
                model_types: k,
            });
        }
        Ok(())
    }
}

pub fn encode_checkpoint(model: &CoticModel, time_scale: f64) -> Vec<u8> {
    let header = Header {
        model: model.config().clone(),
        time_scale,
        params: model
            .params()
            .entries()
            .iter()
            .map(|e| ParamHeader {
                name: e.name.clone(),
                group: e.group,
                shape: e.value.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(20 + json.len() + 8 * model.params().num_scalars() + DIGEST_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for e in model.params().entries() {
        for v in e.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(digest.as_slice());
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 20 + DIGEST_LEN {
        return Err(CheckpointError::Truncated);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Checksum);
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize.checked_add(header_len).ok_or(CheckpointError::Truncated)?;
    if header_end > body.len() {
        return Err(CheckpointError::Truncated);
    }
    let header: Header =
        serde_json::from_slice(&body[20..header_end]).map_err(|e| CheckpointError::Header(e.to_string()))?;

    let mut model = CoticModel::new(header.model)?;
    if model.params().len() != header.params.len() {
        return Err(CheckpointError::Layout(format!(
            "expected {} parameters, file has {}",
            model.params().len(),
            header.params.len()
        )));
    }
    let mut offset = header_end;
    for (i, ph) in header.params.iter().enumerate() {
        let entry = &model.params().entries()[i];
        if entry.name != ph.name || entry.group != ph.group || entry.value.shape() != ph.shape.as_slice() {
            return Err(CheckpointError::Layout(format!("parameter {} ({})", i, ph.name)));
        }
        let target = model.params_mut().value_at_mut(i).data_mut();
        let need = target.len() * 8;
        if offset + need > body.len() {
            return Err(CheckpointError::Truncated);
        }
        for (v, chunk) in target.iter_mut().zip(body[offset..offset + need].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        offset += need;
    }
    if offset != body.len() {
        return Err(CheckpointError::Layout("trailing bytes after parameters".into()));
    }
    Ok(Checkpoint {
        model,
        time_scale: header.time_scale,
    })
}

pub fn save_checkpoint(model: &CoticModel, time_scale: f64, path: &Path) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_checkpoint(model, time_scale))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CoticModel {
        CoticModel::new(ModelConfig {
            num_types: 2,
            embedding_dim: 4,
            hidden_dim: 4,
            num_layers: 2,
            kernel_size: 3,
            kernel_hidden: vec![4],
            head_hidden: vec![4],
            init_seed: 5,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = encode_checkpoint(&m, 12.5);
        let ck = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ck.model, m);
        assert_eq!(ck.time_scale, 12.5);
        assert_eq!(encode_checkpoint(&ck.model, ck.time_scale), bytes);
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = encode_checkpoint(&model(), 1.0);
        let n = bytes.len();
        bytes[n - 40] ^= 1;
        assert!(matches!(decode_checkpoint(&bytes), Err(CheckpointError::Checksum)));
        assert!(matches!(decode_checkpoint(b"garbage!"), Err(CheckpointError::BadMagic)));
        let good = encode_checkpoint(&model(), 1.0);
        assert!(matches!(decode_checkpoint(&good[..30]), Err(CheckpointError::Truncated)));
        assert!(matches!(decode_checkpoint(&good[..good.len() - 8]), Err(CheckpointError::Checksum)));
    }

    #[test]
    fn type_guard() {
        let ck = decode_checkpoint(&encode_checkpoint(&model(), 1.0)).unwrap();
        assert!(ck.check_types(2).is_ok());
        assert!(matches!(ck.check_types(3), Err(CheckpointError::TypeMismatch { .. })));
    }
}
