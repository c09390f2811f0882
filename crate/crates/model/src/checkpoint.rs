//! Parameter checkpoints: one flat little-endian `f64` archive plus a JSON
//! manifest naming each tensor's shape and byte offset.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denoiser::{ModelConfig, ToyModel};
use crate::layers::Params;
use trackedit_core::rng::derive;

pub const TENSORS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT: &str = "trackedit-tensors-v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("checkpoint does not match its manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
    /// Byte offset into the archive.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.display().to_string(), source }
}

pub fn save_checkpoint(dir: &Path, cfg: &ModelConfig, model: &ToyModel) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut bytes = Vec::with_capacity(model.num_params() * 8);
    let mut tensors = Vec::new();
    for (name, m) in model.named() {
        tensors.push(TensorEntry { name, shape: [m.rows, m.cols], dtype: "f64".into(), offset: bytes.len() });
        for v in &m.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest { format: FORMAT.into(), config: *cfg, tensors };
    let bin = dir.join(TENSORS_FILE);
    fs::write(&bin, &bytes).map_err(io_err(&bin))?;
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    fs::write(&path, json).map_err(io_err(&path))
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelConfig, ToyModel), CheckpointError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|source| CheckpointError::Json { path: path.display().to_string(), source })?;
    if manifest.format != FORMAT {
        return Err(CheckpointError::Manifest(format!("unknown format {:?}", manifest.format)));
    }
    let bin = dir.join(TENSORS_FILE);
    let bytes = fs::read(&bin).map_err(io_err(&bin))?;
    let mut model = ToyModel::new(&manifest.config, &mut derive(0, "checkpoint/skeleton"));
    let slots = model.named_mut();
    if slots.len() != manifest.tensors.len() {
        return Err(CheckpointError::Manifest(format!("{} tensors listed, model has {}", manifest.tensors.len(), slots.len())));
    }
    for ((name, m), entry) in slots.into_iter().zip(&manifest.tensors) {
        if entry.name != name || entry.shape != [m.rows, m.cols] || entry.dtype != "f64" {
            return Err(CheckpointError::Manifest(format!("entry {:?} {:?} does not match tensor {name} {}x{}", entry.name, entry.shape, m.rows, m.cols)));
        }
        let end = entry.offset + m.len() * 8;
        let raw = bytes.get(entry.offset..end).ok_or_else(|| CheckpointError::Manifest(format!("{name} runs past the archive")))?;
        for (v, chunk) in m.data.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
    }
    Ok((manifest.config, model))
}
