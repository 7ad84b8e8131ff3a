//! Angle-of-arrival detection on a fixed angle grid, with the network
//! components (batch norm, dropout, ensembles) switchable for ablations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::labeled::{rows_to_tensor, LabeledDataset};
use super::taps::{top_k_support, SnrDraw};
use crate::channel::{steering_vector, uniform_sine_grid};
use crate::error::{Error, Result};
use crate::linalg::{matmul, ComplexMatrix};
use crate::nn::{ensemble_average, fit, LayerSpec, LossKind, ModelState, NetworkSpec, Tensor, TrainConfig};
use crate::random::{add_noise, choose_sorted, complex_gaussian, noise_variance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoaTaskConfig {
    pub antennas: usize,
    /// Candidate angles, uniform in sine.
    pub grid: usize,
    pub paths: usize,
    /// Received power varies with device location, log-uniformly over this
    /// many dB.
    pub power_spread_db: f64,
    pub d_over_lambda: f64,
}

impl Default for AoaTaskConfig {
    fn default() -> Self {
        Self {
            antennas: 16,
            grid: 16,
            paths: 2,
            power_spread_db: 30.0,
            d_over_lambda: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoaTask {
    pub cfg: AoaTaskConfig,
    pub angles: Vec<f64>,
    /// Steering matrix `[a(θ_1) … a(θ_N)]`.
    pub a: ComplexMatrix,
}

impl AoaTask {
    pub fn new(cfg: AoaTaskConfig) -> Result<Self> {
        if cfg.paths == 0 || cfg.paths > cfg.grid || cfg.antennas == 0 {
            return Err(Error::config(format!("inconsistent AoA task {cfg:?}")));
        }
        let angles = uniform_sine_grid(cfg.grid);
        let mut a = ComplexMatrix::zeros(cfg.antennas, cfg.grid);
        for (j, &th) in angles.iter().enumerate() {
            let s = steering_vector(th, cfg.antennas, cfg.d_over_lambda);
            for i in 0..cfg.antennas {
                a[(i, j)] = s[(i, 0)];
            }
        }
        Ok(Self { cfg, angles, a })
    }

    pub fn input_dim(&self) -> usize {
        2 * self.cfg.antennas * (1 + self.cfg.grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoaSample {
    pub y: ComplexMatrix,
    pub support: Vec<usize>,
}

/// `y = g·A_Ω α + n` with distinct on-grid angles `Ω`, `α ~ CN(0, I)` and a
/// location-dependent amplitude `g`. Noise is set from the realized signal
/// power so the SNR is exact per sample.
pub fn generate_aoa_samples<R: Rng + ?Sized>(task: &AoaTask, count: usize, snr: SnrDraw, rng: &mut R) -> Result<Vec<AoaSample>> {
    let c = task.cfg;
    (0..count)
        .map(|_| {
            let support = choose_sorted(rng, c.grid, c.paths);
            let loc_db = rng.random_range(-c.power_spread_db / 2.0..=c.power_spread_db / 2.0);
            let g = 10f64.powf(loc_db / 20.0);
            let alpha = ComplexMatrix::from_fn(c.paths, 1, |_, _| complex_gaussian(rng, 1.0) * g);
            let clean = matmul(&task.a.select_columns(&support)?, &alpha)?;
            let power = clean.frobenius_norm_sqr() / c.antennas as f64;
            let sigma2 = noise_variance(power, snr.sample(rng));
            let y = add_noise(rng, &clean, sigma2);
            Ok(AoaSample { y, support })
        })
        .collect()
}

/// `[Re y; Im y; vec Re A; vec Im A]`.
pub fn aoa_features(task: &AoaTask, y: &ComplexMatrix) -> Vec<f64> {
    let a = task.a.vec();
    let mut out = Vec::with_capacity(task.input_dim());
    out.extend(y.as_slice().iter().map(|z| z.re));
    out.extend(y.as_slice().iter().map(|z| z.im));
    out.extend(a.as_slice().iter().map(|z| z.re));
    out.extend(a.as_slice().iter().map(|z| z.im));
    out
}

pub fn build_aoa_dataset(task: &AoaTask, samples: &[AoaSample], test_count: usize, seed: u64) -> Result<LabeledDataset> {
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| aoa_features(task, &s.y)).collect();
    let labels: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut d = vec![0.0; task.cfg.grid];
            for &i in &s.support {
                d[i] = 1.0;
            }
            d
        })
        .collect();
    let meta = serde_json::json!({ "task": task.cfg, "seed": seed });
    LabeledDataset::new(rows_to_tensor(&inputs)?, rows_to_tensor(&labels)?, meta, test_count, seed)
}

/// Which network components are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoaVariant {
    pub batch_norm: bool,
    pub dropout: f64,
    pub ensemble: usize,
}

impl AoaVariant {
    pub const PLAIN: Self = Self { batch_norm: false, dropout: 0.0, ensemble: 1 };

    /// The five ablation arms: plain, +BN, +dropout, +ensemble, all.
    pub fn ablation(dropout: f64, ensemble: usize) -> [(&'static str, Self); 5] {
        [
            ("fcn", Self::PLAIN),
            ("fcn_bn", Self { batch_norm: true, ..Self::PLAIN }),
            ("fcn_dropout", Self { dropout, ..Self::PLAIN }),
            ("fcn_ensemble", Self { ensemble, ..Self::PLAIN }),
            ("fcn_all", Self { batch_norm: true, dropout, ensemble }),
        ]
    }
}

/// Batch norm on the input normalizes every feature, and therefore each
/// input component group, separately.
pub fn aoa_detector_spec(task: &AoaTask, hidden: &[usize], v: AoaVariant) -> Result<NetworkSpec> {
    let mut layers = Vec::new();
    if v.batch_norm {
        layers.push(LayerSpec::BatchNorm);
    }
    for &h in hidden {
        layers.push(LayerSpec::Dense { units: h });
        if v.batch_norm {
            layers.push(LayerSpec::BatchNorm);
        }
        layers.push(LayerSpec::Relu);
        if v.dropout > 0.0 {
            layers.push(LayerSpec::Dropout { rate: v.dropout });
        }
    }
    layers.push(LayerSpec::Dense { units: task.cfg.grid });
    layers.push(LayerSpec::Sigmoid);
    NetworkSpec::new(task.input_dim(), layers)
}

/// Independently initialized and shuffled members, one per ensemble slot.
pub fn train_aoa_detector(task: &AoaTask, ds: &LabeledDataset, hidden: &[usize], v: AoaVariant, train: &TrainConfig) -> Result<Vec<ModelState>> {
    let spec = aoa_detector_spec(task, hidden, v)?;
    let (x, y) = (ds.train_inputs(), ds.train_labels());
    (0..v.ensemble.max(1))
        .map(|e| {
            let seed = train.seed.wrapping_add(1_000_003 * e as u64);
            let mut model = ModelState::new(spec.clone(), seed)?;
            let cfg = TrainConfig { seed, loss: LossKind::Bce, ..*train };
            fit(&mut model, &x, &y, &cfg)?;
            Ok(model)
        })
        .collect()
}

/// Top-`P` angle indices from the (ensemble-averaged) probabilities.
pub fn detect_aoa(task: &AoaTask, models: &[ModelState], inputs: &Tensor) -> Result<Vec<Vec<usize>>> {
    if inputs.cols() != task.input_dim() {
        return Err(Error::shape("detect_aoa", format!("{} features for a {}-angle grid", inputs.cols(), task.cfg.grid)));
    }
    let probs = ensemble_average(models, inputs)?;
    if probs.cols() != task.cfg.grid {
        return Err(Error::shape("detect_aoa", "model output does not match the grid"));
    }
    Ok((0..probs.rows()).map(|r| top_k_support(probs.row(r), task.cfg.paths)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_for;

    #[test]
    fn features_and_outputs_have_grid_sizes() {
        let task = AoaTask::new(AoaTaskConfig::default()).unwrap();
        let s = generate_aoa_samples(&task, 3, SnrDraw::Fixed { db: 10.0 }, &mut rng_for(0, 0)).unwrap();
        assert_eq!(aoa_features(&task, &s[0].y).len(), task.input_dim());
        let spec = aoa_detector_spec(&task, &[8], AoaVariant::PLAIN).unwrap();
        assert_eq!(spec.output_dim, 16);
        let m = ModelState::new(spec, 0).unwrap();
        let ds = build_aoa_dataset(&task, &s, 0, 0).unwrap();
        let sup = detect_aoa(&task, std::slice::from_ref(&m), &ds.inputs).unwrap();
        assert!(sup.iter().all(|x| x.len() == 2));
        let other = AoaTask::new(AoaTaskConfig { grid: 8, ..Default::default() }).unwrap();
        assert!(detect_aoa(&other, &[m], &ds.inputs).is_err());
    }

    #[test]
    fn samples_hit_requested_snr() {
        let task = AoaTask::new(AoaTaskConfig { paths: 1, ..Default::default() }).unwrap();
        let mut rng = rng_for(1, 0);
        let s = generate_aoa_samples(&task, 1, SnrDraw::Fixed { db: 300.0 }, &mut rng).unwrap();
        let col = task.a.column(s[0].support[0]);
        // noiseless single path: y is a multiple of its steering vector
        let ratio = s[0].y[(0, 0)] / col[(0, 0)];
        assert!(s[0].y.sub(&col.scale(ratio)).unwrap().frobenius_norm() < 1e-9 * s[0].y.frobenius_norm());
    }
}
