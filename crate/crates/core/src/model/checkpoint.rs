//! Binary checkpoint format.
//!
//! ```text
//! b"MGRAPH01" | u64 LE manifest length | JSON manifest | f64 LE arrays
//! ```
//!
//! The manifest lists every array by name and shape; the arrays follow in
//! the same order, row-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MatcherModel, ModelConfig};
use crate::autodiff::Tensor;
use crate::data::{RelationVocab, Vocab};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MGRAPH01";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f64-le";

/// Everything in a checkpoint except the raw arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub relations: RelationVocab,
    pub labels: Vec<String>,
    /// Free-form training state (epoch, step, strategy, ...).
    #[serde(default)]
    pub state: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub arrays: Vec<(String, Tensor)>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    dtype: String,
    #[serde(flatten)]
    meta: CheckpointMeta,
    arrays: Vec<ArrayEntry>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            dtype: DTYPE.to_string(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, t)| ArrayEntry {
                    name: name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&manifest)?;
        let body: usize = self.arrays.iter().map(|(_, t)| t.numel() * 8).sum();
        let mut out = Vec::with_capacity(16 + header.len() + body);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.arrays {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header = bytes
            .get(16..16 + len)
            .ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(header)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        if manifest.dtype != DTYPE {
            return Err(Error::Checkpoint(format!("unsupported dtype {}", manifest.dtype)));
        }
        let mut pos = 16 + len;
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        for entry in manifest.arrays {
            let n: usize = entry.shape.iter().product();
            let chunk = bytes
                .get(pos..pos + 8 * n)
                .ok_or_else(|| Error::Checkpoint(format!("array {} is truncated", entry.name)))?;
            let data = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += 8 * n;
            arrays.push((entry.name, Tensor::new(entry.shape, data)));
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after last array"));
        }
        Ok(Checkpoint {
            meta: manifest.meta,
            arrays,
        })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

impl MatcherModel {
    /// Named copies of every parameter array, in store order.
    pub fn named_arrays(&self) -> Vec<(String, Tensor)> {
        self.store
            .names
            .iter()
            .cloned()
            .zip(self.store.tensors.iter().cloned())
            .collect()
    }

    /// Rebuilds a model from the parameter arrays of a checkpoint. Extra
    /// arrays (optimizer state) are ignored.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let cfg = ckpt.meta.config.clone();
        let mut model = MatcherModel::new(cfg, ckpt.meta.vocab.len(), ckpt.meta.relations.len(), None, 0)?;
        for (name, slot) in model.store.names.iter().zip(model.store.tensors.iter_mut()) {
            let t = ckpt
                .array(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))?;
            if t.shape != slot.shape {
                return Err(Error::Checkpoint(format!(
                    "array {name} has shape {:?}, expected {:?}",
                    t.shape, slot.shape
                )));
            }
            *slot = t.clone();
        }
        Ok(model)
    }
}
