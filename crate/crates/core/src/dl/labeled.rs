use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::nn::Tensor;
use crate::random::rng_for;

/// `[Re z; Im z]` of a column vector (or any matrix in storage order).
pub fn complex_to_real(z: &ComplexMatrix) -> Vec<f64> {
    let s = z.as_slice();
    s.iter().map(|c| c.re).chain(s.iter().map(|c| c.im)).collect()
}

/// Inverse of [`complex_to_real`] into a column vector.
pub fn real_to_complex(v: &[f64]) -> ComplexMatrix {
    let n = v.len() / 2;
    ComplexMatrix::column_vector((0..n).map(|i| C64::new(v[i], v[n + i])).collect())
}

/// Network inputs and labels with a disjoint train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub inputs: Tensor,
    pub labels: Tensor,
    pub meta: serde_json::Value,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl LabeledDataset {
    /// Shuffles indices with `seed` and puts `test_count` of them in the test split.
    pub fn new(inputs: Tensor, labels: Tensor, meta: serde_json::Value, test_count: usize, seed: u64) -> Result<Self> {
        let n = inputs.shape()[0];
        if labels.shape()[0] != n {
            return Err(Error::shape("LabeledDataset", format!("{n} inputs vs {} labels", labels.shape()[0])));
        }
        if test_count > n {
            return Err(Error::config(format!("test split of {test_count} from {n} samples")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_for(seed, 77));
        let test = idx.split_off(n - test_count);
        Ok(Self {
            inputs,
            labels,
            meta,
            train: idx,
            test,
        })
    }

    /// Every sample in the training split.
    pub fn train_only(inputs: Tensor, labels: Tensor, meta: serde_json::Value) -> Result<Self> {
        Self::new(inputs, labels, meta, 0, 0)
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn splits_disjoint(&self) -> bool {
        let mut seen = vec![false; self.len()];
        for &i in self.train.iter().chain(&self.test) {
            if seen[i] {
                return false;
            }
            seen[i] = true;
        }
        true
    }

    pub fn train_inputs(&self) -> Tensor {
        self.inputs.gather(&self.train)
    }

    pub fn train_labels(&self) -> Tensor {
        self.labels.gather(&self.train)
    }

    pub fn test_inputs(&self) -> Tensor {
        self.inputs.gather(&self.test)
    }

    pub fn test_labels(&self) -> Tensor {
        self.labels.gather(&self.test)
    }

    /// SHA-256 over shapes and values of inputs and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in [&self.inputs, &self.labels] {
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Stacks equal-length rows into a `[rows, len]` tensor.
pub fn rows_to_tensor(rows: &[Vec<f64>]) -> Result<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::shape("rows_to_tensor", "ragged rows"));
    }
    Tensor::matrix(rows.len(), cols, rows.concat())
}
