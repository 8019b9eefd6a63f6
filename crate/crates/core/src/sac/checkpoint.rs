//! Policy checkpoints: raw little-endian `f32` tensors plus a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::networks::{Actor, NetConfig};
use super::nn::TensorSpec;
use crate::error::{AwbError, Result};

pub const CHECKPOINT_FORMAT: &str = "nightawb-actor-f32le-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub net: NetConfig,
    /// Offsets count `f32` elements from the start of the data file.
    pub tensors: Vec<TensorSpec>,
    pub param_count: usize,
    pub config_hash: String,
    pub seed: u64,
}

/// Manifest path belonging to a data file `policy.bin` is `policy.json`.
pub fn manifest_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("json")
}

pub fn save_checkpoint(actor: &Actor, data_path: impl AsRef<Path>, config_hash: &str, seed: u64) -> Result<CheckpointManifest> {
    let data_path = data_path.as_ref();
    let mut bytes = Vec::with_capacity(actor.params.len() * 4);
    for v in &actor.params.data {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(data_path, &bytes).map_err(|e| AwbError::io(data_path, e))?;
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        net: actor.cfg,
        tensors: actor.params.specs.clone(),
        param_count: actor.params.len(),
        config_hash: config_hash.to_string(),
        seed,
    };
    let mpath = manifest_path(data_path);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&mpath, text + "\n").map_err(|e| AwbError::io(&mpath, e))?;
    Ok(manifest)
}

/// Loads an actor; accepts either the data file or the manifest path.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Actor, CheckpointManifest)> {
    let path = path.as_ref();
    let data_path = path.with_extension("bin");
    let mpath = manifest_path(&data_path);
    let text = fs::read_to_string(&mpath).map_err(|e| AwbError::io(&mpath, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(AwbError::Checkpoint(format!("unknown format {:?}", manifest.format)));
    }
    let mut actor = Actor::zeroed(manifest.net);
    if actor.params.specs != manifest.tensors || actor.params.len() != manifest.param_count {
        return Err(AwbError::Checkpoint(
            "tensor layout does not match the network configuration".into(),
        ));
    }
    let bytes = fs::read(&data_path).map_err(|e| AwbError::io(&data_path, e))?;
    if bytes.len() != 4 * manifest.param_count {
        return Err(AwbError::Checkpoint(format!(
            "expected {} bytes of parameters, found {}",
            4 * manifest.param_count,
            bytes.len()
        )));
    }
    for (v, chunk) in actor.params.data.iter_mut().zip(bytes.chunks_exact(4)) {
        *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
    }
    Ok((actor, manifest))
}
