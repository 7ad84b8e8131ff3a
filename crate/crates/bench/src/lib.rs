//! Fixed benchmark inputs shared by the criterion targets.

use chanest_core::linalg::ComplexMatrix;
use chanest_core::random::{complex_gaussian_matrix, rng_for};

/// A seeded complex Gaussian matrix with unit-variance entries.
pub fn gaussian(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    complex_gaussian_matrix(&mut rng_for(seed, 0), rows, cols, 1.0)
}
