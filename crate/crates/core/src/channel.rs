//! Synthetic channels and pilot observation models.
//!
//! Geometric mmWave MIMO channels (sum of planar-wave paths), tapped-delay
//! wideband channels, angular dictionaries and the three observation models
//! used by the estimators: frequency-domain pilots on a SISO link, MIMO
//! sounding with precoder/combiner, and the vectorized sensing form of the
//! latter.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dft_matrix, kron, matmul, ComplexMatrix, C64};
use crate::random::{add_noise, choose_sorted, complex_gaussian, qpsk, random_phase};

/// Half-wavelength element spacing.
pub const DEFAULT_D_OVER_LAMBDA: f64 = 0.5;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// `a(θ)` with entry `i = exp(j·2π·(d/λ)·i·sin θ)`, as an `n × 1` matrix.
pub fn steering_vector(angle: f64, n_ant: usize, d_over_lambda: f64) -> ComplexMatrix {
    let step = TAU * d_over_lambda * angle.sin();
    ComplexMatrix::column_vector((0..n_ant).map(|i| C64::from_polar(1.0, step * i as f64)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: C64,
    /// Angle of arrival in radians, `[0, 2π)`.
    pub aoa: f64,
    /// Angle of departure in radians, `[0, 2π)`.
    pub aod: f64,
    /// Seconds.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricChannelParams {
    pub paths: Vec<Path>,
    pub n_rx: usize,
    pub n_tx: usize,
}

impl GeometricChannelParams {
    /// Builds params, wrapping angles into `[0, 2π)` and sorting by delay so
    /// the first path is the line-of-sight one.
    pub fn new(mut paths: Vec<Path>, n_rx: usize, n_tx: usize) -> Result<Self> {
        if paths.is_empty() || paths.len() > n_rx.min(n_tx) {
            return Err(Error::config(format!(
                "{} paths for a {n_rx}x{n_tx} channel; need 1..=min(N_R, N_T)",
                paths.len()
            )));
        }
        for p in &mut paths {
            if !(p.delay >= 0.0) || !p.delay.is_finite() {
                return Err(Error::config(format!("invalid path delay {}", p.delay)));
            }
            p.aoa = wrap_angle(p.aoa);
            p.aod = wrap_angle(p.aod);
        }
        paths.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        Ok(Self { paths, n_rx, n_tx })
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// `H[k] = Σᵢ αᵢ e^{−j2πτᵢ k f_s} a_R(θᵢ) a_T(φᵢ)^H`, an `N_R × N_T` matrix.
pub fn geometric_channel(
    params: &GeometricChannelParams,
    k: f64,
    f_s: f64,
    d_over_lambda: f64,
) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(params.n_rx, params.n_tx);
    for p in &params.paths {
        let coef = p.gain * C64::from_polar(1.0, -TAU * p.delay * k * f_s);
        let sr = TAU * d_over_lambda * p.aoa.sin();
        let st = TAU * d_over_lambda * p.aod.sin();
        for r in 0..params.n_rx {
            for t in 0..params.n_tx {
                h[(r, t)] += coef * C64::from_polar(1.0, sr * r as f64 - st * t as f64);
            }
        }
    }
    h
}

/// Column `g` is `a(2πg/G)/√n`.
///
/// Because the angle enters through `sin`, columns `g` and `G/2 − g` coincide
/// up to rounding; the dictionary is only `G/2 + 1`-distinct.
pub fn angular_dictionary(n_ant: usize, grid_size: usize) -> ComplexMatrix {
    let norm = 1.0 / (n_ant as f64).sqrt();
    let mut a = ComplexMatrix::zeros(n_ant, grid_size);
    for g in 0..grid_size {
        let step = TAU * DEFAULT_D_OVER_LAMBDA * (TAU * g as f64 / grid_size as f64).sin();
        for i in 0..n_ant {
            a[(i, g)] = C64::from_polar(norm, step * i as f64);
        }
    }
    a
}

/// Angles (radians) whose sines are uniformly spaced over `[−1, 1)`.
pub fn uniform_sine_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|g| (-1.0 + 2.0 * g as f64 / n as f64).asin())
        .collect()
}

// ---------------------------------------------------------------------------
// MIMO sounding

/// Precoder `F` (`N_T × M`), combiner `W` (`N_R × N`), pilot symbols `S`
/// (diagonal `M × M`) and the pilot subcarriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimoPilotConfig {
    pub f: ComplexMatrix,
    pub w: ComplexMatrix,
    pub s: ComplexMatrix,
    pub f_s: f64,
    pub subcarriers: Vec<usize>,
}

impl MimoPilotConfig {
    pub fn new(
        f: ComplexMatrix,
        w: ComplexMatrix,
        s: ComplexMatrix,
        f_s: f64,
        subcarriers: Vec<usize>,
    ) -> Result<Self> {
        let m = f.cols();
        if s.dims() != (m, m) {
            return Err(Error::shape("MimoPilotConfig", format!("S is {:?}, F has {m} columns", s.dims())));
        }
        for r in 0..m {
            for c in 0..m {
                let z = s[(r, c)];
                let ok = if r == c { (z.norm() - 1.0).abs() < 1e-9 } else { z == C64::new(0.0, 0.0) };
                if !ok {
                    return Err(Error::config("S must be diagonal with unit-modulus entries"));
                }
            }
        }
        for (name, mat) in [("F", &f), ("W", &w)] {
            for c in 0..mat.cols() {
                let n = mat.column(c).frobenius_norm();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!("column {c} of {name} has norm {n}")));
                }
            }
        }
        Ok(Self { f, w, s, f_s, subcarriers })
    }

    /// `W = I`, `F = I`, `S = I`.
    pub fn identity(n_rx: usize, n_tx: usize, f_s: f64, subcarriers: Vec<usize>) -> Self {
        Self {
            f: ComplexMatrix::identity(n_tx),
            w: ComplexMatrix::identity(n_rx),
            s: ComplexMatrix::identity(n_tx),
            f_s,
            subcarriers,
        }
    }

    /// Analog phase-shifter sounding: every entry of `F` and `W` is a random
    /// phase scaled to unit column norm, `S` is QPSK.
    pub fn random_phase<R: Rng + ?Sized>(
        rng: &mut R,
        n_rx: usize,
        n_tx: usize,
        m: usize,
        n: usize,
        f_s: f64,
        subcarriers: Vec<usize>,
    ) -> Self {
        let f = ComplexMatrix::from_fn(n_tx, m, |_, _| random_phase(rng) / (n_tx as f64).sqrt());
        let w = ComplexMatrix::from_fn(n_rx, n, |_, _| random_phase(rng) / (n_rx as f64).sqrt());
        let symbols: Vec<C64> = (0..m).map(|_| qpsk(rng)).collect();
        Self {
            f,
            w,
            s: ComplexMatrix::diag(&symbols),
            f_s,
            subcarriers,
        }
    }

    /// Random-phase precoder with a fully digital receiver (`W = I`).
    pub fn random_precoder<R: Rng + ?Sized>(
        rng: &mut R,
        n_rx: usize,
        n_tx: usize,
        m: usize,
        f_s: f64,
        subcarriers: Vec<usize>,
    ) -> Self {
        let f = ComplexMatrix::from_fn(n_tx, m, |_, _| random_phase(rng) / (n_tx as f64).sqrt());
        let symbols: Vec<C64> = (0..m).map(|_| qpsk(rng)).collect();
        Self {
            f,
            w: ComplexMatrix::identity(n_rx),
            s: ComplexMatrix::diag(&symbols),
            f_s,
            subcarriers,
        }
    }

    pub fn n_rx(&self) -> usize {
        self.w.rows()
    }

    pub fn n_tx(&self) -> usize {
        self.f.rows()
    }

    /// Number of observations per subcarrier, `N·M`.
    pub fn observations(&self) -> usize {
        self.w.cols() * self.f.cols()
    }

    /// `(F S)ᵀ ⊗ W^H`, so that `vec(W^H H F S) = X·vec(H)`.
    pub fn measurement_matrix(&self) -> ComplexMatrix {
        let fs = matmul(&self.f, &self.s).expect("validated at construction");
        kron(&fs.transpose(), &self.w.hermitian())
    }
}

/// `Φ = (A_T^H F S)ᵀ ⊗ (W^H A_R)`, so that `vec(W^H A_R Δ A_T^H F S) = Φ·vec(Δ)`.
pub fn sensing_matrix(
    cfg: &MimoPilotConfig,
    a_t: &ComplexMatrix,
    a_r: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let left = matmul(&matmul(&a_t.hermitian(), &cfg.f)?, &cfg.s)?;
    let right = matmul(&cfg.w.hermitian(), a_r)?;
    Ok(kron(&left.transpose(), &right))
}

/// `W^H H F S` without noise.
pub fn mimo_signal(h: &ComplexMatrix, cfg: &MimoPilotConfig) -> Result<ComplexMatrix> {
    matmul(&matmul(&matmul(&cfg.w.hermitian(), h)?, &cfg.f)?, &cfg.s)
}

/// `Y = W^H H F S + V` with `V` i.i.d. CN(0, σ²).
pub fn pilot_observation_mimo<R: Rng + ?Sized>(
    h: &ComplexMatrix,
    cfg: &MimoPilotConfig,
    sigma2: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    Ok(add_noise(rng, &mimo_signal(h, cfg)?, sigma2))
}

// ---------------------------------------------------------------------------
// Frequency-domain pilots

/// Pilot positions and symbols on an `n_fft`-point OFDM grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotConfigFreq {
    pub n_fft: usize,
    pub pilot_positions: Vec<usize>,
    pub pilot_symbols: Vec<C64>,
}

impl PilotConfigFreq {
    pub fn new(n_fft: usize, pilot_positions: Vec<usize>, pilot_symbols: Vec<C64>) -> Result<Self> {
        if pilot_positions.len() != pilot_symbols.len() {
            return Err(Error::config("pilot positions and symbols differ in length"));
        }
        if pilot_positions.len() > n_fft {
            return Err(Error::config("more pilots than subcarriers"));
        }
        if !pilot_positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("pilot positions must be strictly increasing"));
        }
        if pilot_positions.last().is_some_and(|&p| p >= n_fft) {
            return Err(Error::config("pilot position outside the FFT grid"));
        }
        if pilot_symbols.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::config("pilot symbols must have unit modulus"));
        }
        Ok(Self { n_fft, pilot_positions, pilot_symbols })
    }

    /// Every subcarrier carries the symbol 1.
    pub fn full(n_fft: usize) -> Self {
        Self {
            n_fft,
            pilot_positions: (0..n_fft).collect(),
            pilot_symbols: vec![C64::new(1.0, 0.0); n_fft],
        }
    }

    /// `m` QPSK pilots at random positions within the first `band` subcarriers.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_fft: usize, m: usize, band: usize) -> Result<Self> {
        if band > n_fft || m > band {
            return Err(Error::config(format!("cannot place {m} pilots in band {band} of {n_fft}")));
        }
        let pos = choose_sorted(rng, band, m);
        let sym = (0..m).map(|_| qpsk(rng)).collect();
        Self::new(n_fft, pos, sym)
    }

    pub fn num_pilots(&self) -> usize {
        self.pilot_positions.len()
    }

    /// `diag(p_f)·Φ·D`, an `m × n` matrix with the unnormalized DFT `D`.
    pub fn measurement_matrix(&self) -> ComplexMatrix {
        let n = self.n_fft;
        let mut p = ComplexMatrix::zeros(self.num_pilots(), n);
        for (i, (&k, &s)) in self.pilot_positions.iter().zip(&self.pilot_symbols).enumerate() {
            for l in 0..n {
                let phase = -TAU * ((k * l) % n) as f64 / n as f64;
                p[(i, l)] = s * C64::from_polar(1.0, phase);
            }
        }
        p
    }
}

/// `y = diag(p_f)·Φ·D·h + v` with `v ~ CN(0, σ²I)`.
pub fn pilot_observation_freq<R: Rng + ?Sized>(
    h: &ComplexMatrix,
    cfg: &PilotConfigFreq,
    sigma2: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    if h.dims() != (cfg.n_fft, 1) {
        return Err(Error::shape(
            "pilot_observation_freq",
            format!("h is {:?}, expected {}x1", h.dims(), cfg.n_fft),
        ));
    }
    let y = matmul(&cfg.measurement_matrix(), h)?;
    Ok(add_noise(rng, &y, sigma2))
}

/// Full `n`-point DFT of `h`, i.e. the pilot model with every subcarrier and
/// unit symbols. Mostly useful as a test oracle.
pub fn dft_observation(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    matmul(&dft_matrix(h.rows()), h)
}

// ---------------------------------------------------------------------------
// Tapped-delay channels

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TappedDelayProfile {
    pub name: String,
    pub delays_ns: Vec<f64>,
    pub powers_db: Vec<f64>,
}

impl TappedDelayProfile {
    pub fn new(name: impl Into<String>, delays_ns: Vec<f64>, powers_db: Vec<f64>) -> Result<Self> {
        if delays_ns.len() != powers_db.len() || delays_ns.is_empty() {
            return Err(Error::config("delay and power lists must be non-empty and equal length"));
        }
        if delays_ns.iter().any(|&d| !(d >= 0.0)) || !delays_ns.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("delays must be nonnegative and strictly increasing"));
        }
        Ok(Self {
            name: name.into(),
            delays_ns,
            powers_db,
        })
    }

    /// Extended Vehicular A: nine taps up to 2.51 µs.
    pub fn eva() -> Self {
        Self::new(
            "EVA",
            vec![0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0],
            vec![0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9],
        )
        .expect("static profile is valid")
    }

    /// Linear tap powers scaled to sum to one.
    pub fn normalized_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.iter().map(|p| p / total).collect()
    }

    /// `round(delay · rate)` for each tap.
    pub fn tap_indices(&self, sample_rate: f64) -> Vec<usize> {
        self.delays_ns
            .iter()
            .map(|d| (d * 1e-9 * sample_rate).round() as usize)
            .collect()
    }
}

/// Draws `h` of length `n` from the profile. Taps that round to the same
/// index merge their powers. Returns `h` and the nonzero-tap indicator.
pub fn tapped_delay_channel<R: Rng + ?Sized>(
    profile: &TappedDelayProfile,
    sample_rate: f64,
    n: usize,
    rng: &mut R,
) -> Result<(ComplexMatrix, Vec<bool>)> {
    let idx = profile.tap_indices(sample_rate);
    if let Some(&last) = idx.iter().max() {
        if last >= n {
            return Err(Error::config(format!(
                "tap index {last} does not fit in a length-{n} channel"
            )));
        }
    }
    let mut power = vec![0.0; n];
    for (&i, p) in idx.iter().zip(profile.normalized_powers()) {
        power[i] += p;
    }
    let mut h = ComplexMatrix::zeros(n, 1);
    let mut support = vec![false; n];
    for i in 0..n {
        if power[i] > 0.0 {
            h[(i, 0)] = complex_gaussian(rng, power[i]);
            support[i] = true;
        }
    }
    Ok((h, support))
}

/// `k` taps placed uniformly at random among the first `window` indices of a
/// length-`n` channel, each with gain CN(0, 1/k).
pub fn random_sparse_taps<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    k: usize,
    window: usize,
) -> Result<(ComplexMatrix, Vec<bool>)> {
    if k == 0 || k > window || window > n {
        return Err(Error::config(format!("cannot place {k} taps in window {window} of {n}")));
    }
    let mut h = ComplexMatrix::zeros(n, 1);
    let mut support = vec![false; n];
    for i in choose_sorted(rng, window, k) {
        h[(i, 0)] = complex_gaussian(rng, 1.0 / k as f64);
        support[i] = true;
    }
    Ok((h, support))
}

// ---------------------------------------------------------------------------
// Geometry samplers

/// Random sparse-scattering geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryScenario {
    pub n_rx: usize,
    pub n_tx: usize,
    pub min_paths: usize,
    pub max_paths: usize,
    /// Radians, `[lo, hi)`.
    pub aoa_range: (f64, f64),
    pub aod_range: (f64, f64),
    /// Seconds.
    pub tau_max: f64,
    /// Power of the line-of-sight path relative to each scattered one.
    pub los_factor: f64,
}

impl GeometryScenario {
    pub fn new(n_rx: usize, n_tx: usize, paths: usize) -> Self {
        Self {
            n_rx,
            n_tx,
            min_paths: paths,
            max_paths: paths,
            aoa_range: (-PI / 2.0, PI / 2.0),
            aod_range: (-PI / 2.0, PI / 2.0),
            tau_max: 100e-9,
            los_factor: 1.0,
        }
    }
}

/// Angles uniform on the configured intervals, delays uniform on
/// `[0, τ_max]`, gains CN with the first (earliest) path scaled by the LoS
/// factor and total average power one.
pub fn sample_geometry<R: Rng + ?Sized>(
    rng: &mut R,
    sc: &GeometryScenario,
) -> Result<GeometricChannelParams> {
    for (lo, hi) in [sc.aoa_range, sc.aod_range] {
        if !(hi > lo) {
            return Err(Error::config(format!("empty angle interval [{lo}, {hi})")));
        }
    }
    if sc.min_paths == 0 || sc.min_paths > sc.max_paths {
        return Err(Error::config("path count range is empty"));
    }
    let p = rng.random_range(sc.min_paths..=sc.max_paths);
    let mut delays: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..=sc.tau_max)).collect();
    delays.sort_by(f64::total_cmp);
    let total = sc.los_factor + (p - 1) as f64;
    let paths = delays
        .into_iter()
        .enumerate()
        .map(|(i, delay)| {
            let var = if i == 0 { sc.los_factor } else { 1.0 } / total;
            Path {
                gain: complex_gaussian(rng, var),
                aoa: rng.random_range(sc.aoa_range.0..sc.aoa_range.1),
                aod: rng.random_range(sc.aod_range.0..sc.aod_range.1),
                delay,
            }
        })
        .collect();
    GeometricChannelParams::new(paths, sc.n_rx, sc.n_tx)
}

/// A user moving along a straight road past a fixed base station and one
/// fixed scatterer. The base-station array lies on the y axis facing +x,
/// the user array is parallel to the road.
///
/// Each sequence draws a road offset, a start point and a per-interval
/// displacement; the two paths (direct and scattered) then follow
/// deterministically, with fresh carrier phases every interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTrajectory {
    pub n_rx: usize,
    pub n_tx: usize,
    /// Metres.
    pub road_offset: (f64, f64),
    pub start: (f64, f64),
    /// Metres moved per coherence interval.
    pub step: (f64, f64),
    pub scatterer: (f64, f64),
    /// Amplitude of the scattered path relative to free-space loss.
    pub reflection: f64,
}

impl LineTrajectory {
    pub fn street(n_rx: usize, n_tx: usize) -> Self {
        Self {
            n_rx,
            n_tx,
            road_offset: (20.0, 40.0),
            start: (-40.0, 40.0),
            step: (-2.5, 2.5),
            scatterer: (15.0, 35.0),
            reflection: 0.6,
        }
    }

    /// Largest delay the geometry can produce, in seconds.
    pub fn max_delay(&self) -> f64 {
        let far_y = self.start.0.abs().max(self.start.1.abs()) + 8.0 * self.step.0.abs().max(self.step.1.abs());
        let ue = (self.road_offset.1, far_y);
        let (sx, sy) = self.scatterer;
        let d1 = sx.hypot(sy);
        let d2 = (ue.0 - sx).hypot(ue.1.abs() + sy.abs());
        (d1 + d2) / SPEED_OF_LIGHT
    }

    /// `len` consecutive intervals of one trajectory.
    pub fn sample_sequence<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        len: usize,
    ) -> Result<Vec<GeometricChannelParams>> {
        let x = rng.random_range(self.road_offset.0..=self.road_offset.1);
        let y0 = rng.random_range(self.start.0..=self.start.1);
        let v = rng.random_range(self.step.0..=self.step.1);
        let (sx, sy) = self.scatterer;
        let d1 = sx.hypot(sy);
        (0..len)
            .map(|l| {
                let y = y0 + v * l as f64;
                let d0 = x.hypot(y);
                let d2 = (x - sx).hypot(y - sy);
                let direct = Path {
                    gain: C64::from_polar(1.0, rng.random_range(0.0..TAU)),
                    aoa: (-y / d0).asin(),
                    aod: (y / d0).asin(),
                    delay: d0 / SPEED_OF_LIGHT,
                };
                let scattered = Path {
                    gain: C64::from_polar(
                        self.reflection * d0 / (d1 + d2),
                        rng.random_range(0.0..TAU),
                    ),
                    aoa: ((sy - y) / d2).asin(),
                    aod: (sy / d1).asin(),
                    delay: (d1 + d2) / SPEED_OF_LIGHT,
                };
                GeometricChannelParams::new(vec![direct, scattered], self.n_rx, self.n_tx)
            })
            .collect()
    }
}
