//! Seeded random streams and the few distributions every generator needs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexMatrix, C64};

pub type SimRng = ChaCha8Rng;

/// Generator for `(seed, stream)`. Distinct streams never overlap, so the
/// sample at index `i` can be drawn independently of all others.
pub fn rng_for(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw from CN(0, var).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    var: f64,
) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, var))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Unit-modulus QPSK symbol.
pub fn qpsk<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let q = std::f64::consts::FRAC_1_SQRT_2;
    let re = if rng.random::<bool>() { q } else { -q };
    let im = if rng.random::<bool>() { q } else { -q };
    C64::new(re, im)
}

/// Uniformly random unit-modulus phase `e^{jψ}`.
pub fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
}

/// Noise variance giving `snr_db` for a noiseless observation with the given
/// per-entry signal power.
pub fn noise_variance(signal_power: f64, snr_db: f64) -> f64 {
    signal_power / 10f64.powf(snr_db / 10.0)
}

/// Adds CN(0, σ²) noise to every entry.
pub fn add_noise<R: Rng + ?Sized>(rng: &mut R, y: &ComplexMatrix, sigma2: f64) -> ComplexMatrix {
    if sigma2 == 0.0 {
        return y.clone();
    }
    y.map_with(|z| z + complex_gaussian(rng, sigma2))
}

/// Fisher-Yates partial shuffle returning `k` distinct indices from `0..n`, sorted.
pub fn choose_sorted<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}
