//! Encoder checkpoints: a little-endian binary blob of the parameters plus a
//! JSON sidecar at `<path>.json`.
//!
//! Blob layout: `b"URCK"`, u32 version, u32 dim, u64 buckets, u64 hash seed,
//! u64 init seed, u64 parameter count, then the parameters as f64.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::encoder::{EncoderConfig, LinearEncoder, TrainableEncoder};
use crate::corpus::{write_atomic, CorpusError};
use crate::rng::sha256_hex;

const MAGIC: &[u8; 4] = b"URCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 * 4;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] CorpusError),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub encoder: EncoderConfig,
    pub param_count: usize,
    pub params_sha256: String,
    /// Free-form provenance: schedule, loss, config hash.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn encode(encoder: &LinearEncoder) -> Vec<u8> {
    let cfg = encoder.config();
    let params = encoder.params();
    let mut out = Vec::with_capacity(HEADER_LEN + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.dim as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.buckets as u64).to_le_bytes());
    out.extend_from_slice(&cfg.hash_seed.to_le_bytes());
    out.extend_from_slice(&cfg.init_seed.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn save_checkpoint(
    encoder: &LinearEncoder,
    path: &Path,
    metadata: serde_json::Value,
) -> Result<CheckpointMeta, CheckpointError> {
    let blob = encode(encoder);
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        encoder: *encoder.config(),
        param_count: encoder.params().len(),
        params_sha256: sha256_hex(&blob[HEADER_LEN..]),
        metadata,
    };
    write_atomic(path, &blob)?;
    let mut json = serde_json::to_string_pretty(&meta).expect("checkpoint meta serializes");
    json.push('\n');
    write_atomic(&sidecar_path(path), json.as_bytes())?;
    Ok(meta)
}

fn take<const N: usize>(bytes: &[u8], at: &mut usize) -> [u8; N] {
    let out = bytes[*at..*at + N].try_into().expect("length checked");
    *at += N;
    out
}

pub fn load_checkpoint(path: &Path) -> Result<LinearEncoder, CheckpointError> {
    let bad = |message: String| CheckpointError::Format {
        path: path.to_path_buf(),
        message,
    };
    let bytes = std::fs::read(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("not an encoder checkpoint".into()));
    }
    let mut at = 4;
    let version = u32::from_le_bytes(take(&bytes, &mut at));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let dim = u32::from_le_bytes(take(&bytes, &mut at)) as usize;
    let buckets = u64::from_le_bytes(take(&bytes, &mut at)) as usize;
    let hash_seed = u64::from_le_bytes(take(&bytes, &mut at));
    let init_seed = u64::from_le_bytes(take(&bytes, &mut at));
    let count = u64::from_le_bytes(take(&bytes, &mut at)) as usize;
    if bytes.len() != HEADER_LEN + count * 8 {
        return Err(bad(format!(
            "expected {count} parameters, file holds {} bytes of data",
            bytes.len() - HEADER_LEN
        )));
    }
    let params = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let config = EncoderConfig {
        dim,
        buckets,
        hash_seed,
        init_seed,
    };
    LinearEncoder::from_weights(config, params).map_err(bad)
}

pub fn read_checkpoint_meta(path: &Path) -> Result<CheckpointMeta, CheckpointError> {
    let side = sidecar_path(path);
    let text = crate::corpus::read_to_string(&side)?;
    serde_json::from_str(&text).map_err(|e| CheckpointError::Format {
        path: side,
        message: e.to_string(),
    })
}
