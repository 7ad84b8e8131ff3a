//! On-disk array bundles: a JSON manifest plus one raw little-endian blob.
//!
//! The manifest records every array's name, dtype tag (`c128` for complex
//! interleaved re/im, `f64` for real), shape and byte offset, together with
//! the generating seed and a free-form scenario description. The blob path is
//! stored relative to the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "c128")]
    C128,
    #[serde(rename = "f64")]
    F64,
}

impl DType {
    fn scalar_bytes(self) -> usize {
        match self {
            DType::C128 => 16,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    Complex(Vec<C64>),
    Real(Vec<f64>),
}

impl ArrayData {
    pub fn dtype(&self) -> DType {
        match self {
            ArrayData::Complex(_) => DType::C128,
            ArrayData::Real(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::Complex(v) => v.len(),
            ArrayData::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::Complex(v) => {
                for z in v {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
            ArrayData::Real(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn real(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data: ArrayData::Real(data),
        }
    }

    pub fn complex(name: impl Into<String>, shape: Vec<usize>, data: Vec<C64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data: ArrayData::Complex(data),
        }
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match &self.data {
            ArrayData::Real(v) => Some(v),
            ArrayData::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&[C64]> {
        match &self.data {
            ArrayData::Complex(v) => Some(v),
            ArrayData::Real(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub blob: String,
    pub seed: u64,
    pub scenario: serde_json::Value,
    pub arrays: Vec<ArrayEntry>,
    /// Hex SHA-256 of the blob.
    pub sha256: String,
}

/// A set of arrays with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayBundle {
    pub seed: u64,
    pub scenario: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

impl ArrayBundle {
    pub fn new(seed: u64, scenario: serde_json::Value) -> Self {
        Self {
            seed,
            scenario,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, array: NamedArray) -> Result<()> {
        let expected: usize = array.shape.iter().product();
        if expected != array.data.len() {
            return Err(Error::shape(
                "ArrayBundle::push",
                format!("`{}` has shape {:?} but {} elements", array.name, array.shape, array.data.len()),
            ));
        }
        if self.get(&array.name).is_some() {
            return Err(Error::config(format!("duplicate array `{}`", array.name)));
        }
        self.arrays.push(array);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    fn blob(&self) -> (Vec<u8>, Vec<ArrayEntry>) {
        let mut bytes = Vec::new();
        let mut entries = Vec::with_capacity(self.arrays.len());
        for a in &self.arrays {
            entries.push(ArrayEntry {
                name: a.name.clone(),
                dtype: a.data.dtype(),
                shape: a.shape.clone(),
                offset: bytes.len(),
            });
            a.data.write_le(&mut bytes);
        }
        (bytes, entries)
    }

    /// SHA-256 of the serialized arrays, independent of where they are stored.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.blob().0))
    }

    /// Writes `<stem>.json` and `<stem>.bin` into `dir`; returns the manifest path.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (bytes, arrays) = self.blob();
        let blob_name = format!("{stem}.bin");
        let blob_path = dir.join(&blob_name);
        fs::write(&blob_path, &bytes).map_err(|e| Error::io(&blob_path, e))?;
        let manifest = Manifest {
            blob: blob_name,
            seed: self.seed,
            scenario: self.scenario.clone(),
            arrays,
            sha256: hex::encode(Sha256::digest(&bytes)),
        };
        let path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let blob_path = base.join(&manifest.blob);
        let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let format_err = |detail: String| Error::Format {
            path: blob_path.clone(),
            detail,
        };
        if hex::encode(Sha256::digest(&bytes)) != manifest.sha256 {
            return Err(format_err("checksum mismatch".into()));
        }
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        for e in &manifest.arrays {
            let count: usize = e.shape.iter().product();
            let end = e.offset + count * e.dtype.scalar_bytes();
            let raw = bytes
                .get(e.offset..end)
                .ok_or_else(|| format_err(format!("array `{}` runs past the blob", e.name)))?;
            let floats: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let data = match e.dtype {
                DType::F64 => ArrayData::Real(floats),
                DType::C128 => ArrayData::Complex(floats.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()),
            };
            arrays.push(NamedArray {
                name: e.name.clone(),
                shape: e.shape.clone(),
                data,
            });
        }
        Ok(Self {
            seed: manifest.seed,
            scenario: manifest.scenario,
            arrays,
        })
    }
}
