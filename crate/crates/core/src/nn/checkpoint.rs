//! Model checkpoints: a magic line, the header length as a little-endian
//! `u64`, a JSON header, then every tensor as little-endian `f64` in header
//! order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelState, NetworkSpec};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"CHANEST-CKPT-1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: NetworkSpec,
    pub seed: u64,
    /// Free-form training details (config, epochs run, final loss).
    pub metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(model: &ModelState, seed: u64, metadata: serde_json::Value) -> Result<Vec<u8>> {
    let ps = model.params();
    let header = CheckpointHeader {
        spec: model.spec().clone(),
        seed,
        metadata,
        tensors: ps
            .ids()
            .map(|id| TensorEntry {
                name: ps.name(id).to_owned(),
                shape: ps.value(id).shape().to_vec(),
                trainable: ps.is_trainable(id),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + 8 * ps.num_trainable());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for id in ps.ids() {
        for v in ps.value(id).data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelState, CheckpointHeader)> {
    let bad = |detail: &str| Error::Format {
        path: "<checkpoint>".into(),
        detail: detail.into(),
    };
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("missing magic"))?;
    if rest.len() < 8 {
        return Err(bad("truncated header length"));
    }
    let (len, rest) = rest.split_at(8);
    let len = u64::from_le_bytes(len.try_into().expect("8 bytes")) as usize;
    if rest.len() < len {
        return Err(bad("truncated header"));
    }
    let (json, mut blob) = rest.split_at(len);
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    let mut store = ParamStore::new();
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        if blob.len() < 8 * n {
            return Err(bad("truncated tensor data"));
        }
        let (chunk, tail) = blob.split_at(8 * n);
        blob = tail;
        let data = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(e.shape.clone(), data)?;
        if e.trainable {
            store.add(e.name.clone(), t);
        } else {
            store.add_buffer(e.name.clone(), t);
        }
    }
    if !blob.is_empty() {
        return Err(bad("trailing bytes after tensor data"));
    }
    let model = ModelState::from_params(header.spec.clone(), store, header.seed)?;
    Ok((model, header))
}

pub fn save_checkpoint(path: &Path, model: &ModelState, seed: u64, metadata: serde_json::Value) -> Result<()> {
    let bytes = encode_checkpoint(model, seed, metadata)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelState, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format { detail, .. } => Error::Format {
            path: path.to_path_buf(),
            detail,
        },
        other => other,
    })
}
