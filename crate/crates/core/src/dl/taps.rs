//! Time-domain tap detection: a network maps pilot observations to the
//! probability that each channel tap is nonzero, then least squares on the
//! detected support gives the channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::labeled::{complex_to_real, rows_to_tensor, LabeledDataset};
use crate::channel::{pilot_observation_freq, random_sparse_taps, PilotConfigFreq};
use crate::classical::oracle_ls;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::nn::{fit, LayerSpec, LossKind, ModelState, NetworkSpec, Tensor, TrainConfig};
use crate::random::noise_variance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapTaskConfig {
    /// Channel length and FFT size.
    pub n: usize,
    /// Number of pilots.
    pub m: usize,
    /// Nonzero taps per channel.
    pub k: usize,
    /// Taps lie in the first `window` indices.
    pub window: usize,
    /// Pilots lie in the first `band` subcarriers.
    pub band: usize,
}

impl TapTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k >= self.n || self.m > self.n || self.window > self.n || self.k > self.window {
            return Err(Error::config(format!("inconsistent tap task {self:?}")));
        }
        if self.m > self.band || self.band > self.n {
            return Err(Error::config(format!("cannot place {} pilots in band {}", self.m, self.band)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnrDraw {
    Fixed { db: f64 },
    /// Uniform in dB per sample.
    Uniform { low_db: f64, high_db: f64 },
}

impl SnrDraw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SnrDraw::Fixed { db } => db,
            SnrDraw::Uniform { low_db, high_db } => rng.random_range(low_db..=high_db),
        }
    }
}

/// Pilot pattern and its `m × n` measurement matrix, shared by all samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TapTask {
    pub cfg: TapTaskConfig,
    pub pilots: PilotConfigFreq,
    pub p: ComplexMatrix,
}

impl TapTask {
    pub fn new<R: Rng + ?Sized>(cfg: TapTaskConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let pilots = PilotConfigFreq::random(rng, cfg.n, cfg.m, cfg.band)?;
        let p = pilots.measurement_matrix();
        Ok(Self { cfg, pilots, p })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapSample {
    pub y: ComplexMatrix,
    pub h: ComplexMatrix,
    pub support: Vec<usize>,
    pub snr_db: f64,
}

/// Draws `count` k-sparse channels and their noisy pilot observations. The
/// SNR is relative to the average received power, which is 1 because
/// `E‖h‖² = 1` and every row of the measurement matrix has unit-modulus
/// entries.
pub fn generate_tap_samples<R: Rng + ?Sized>(task: &TapTask, count: usize, snr: SnrDraw, rng: &mut R) -> Result<Vec<TapSample>> {
    let c = task.cfg;
    (0..count)
        .map(|_| {
            let (h, mask) = random_sparse_taps(rng, c.n, c.k, c.window)?;
            let snr_db = snr.sample(rng);
            let y = pilot_observation_freq(&h, &task.pilots, noise_variance(1.0, snr_db), rng)?;
            let support = mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
            Ok(TapSample { y, h, support, snr_db })
        })
        .collect()
}

/// Inputs `[Re y; Im y]`, labels the tap indicator δ.
pub fn build_tap_dataset(task: &TapTask, samples: &[TapSample], test_count: usize, seed: u64) -> Result<LabeledDataset> {
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| complex_to_real(&s.y)).collect();
    let labels: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut d = vec![0.0; task.cfg.n];
            for &i in &s.support {
                d[i] = 1.0;
            }
            d
        })
        .collect();
    let meta = serde_json::json!({ "task": task.cfg, "seed": seed });
    LabeledDataset::new(rows_to_tensor(&inputs)?, rows_to_tensor(&labels)?, meta, test_count, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapDetectorConfig {
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub train: TrainConfig,
}

/// `2m → [dense, (bn), relu]* → n → sigmoid`.
pub fn tap_detector_spec(task: &TapTaskConfig, hidden: &[usize], batch_norm: bool) -> Result<NetworkSpec> {
    let mut layers = Vec::new();
    for &h in hidden {
        layers.push(LayerSpec::Dense { units: h });
        if batch_norm {
            layers.push(LayerSpec::BatchNorm);
        }
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Dense { units: task.n });
    layers.push(LayerSpec::Sigmoid);
    NetworkSpec::new(2 * task.m, layers)
}

/// Trains on the dataset's training split with BCE.
pub fn train_tap_detector(task: &TapTaskConfig, ds: &LabeledDataset, cfg: &TapDetectorConfig) -> Result<(ModelState, Vec<f64>)> {
    let spec = tap_detector_spec(task, &cfg.hidden, cfg.batch_norm)?;
    let mut model = ModelState::new(spec, cfg.train.seed)?;
    let train = TrainConfig {
        loss: LossKind::Bce,
        ..cfg.train
    };
    let history = fit(&mut model, &ds.train_inputs(), &ds.train_labels(), &train)?;
    Ok((model, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportMode {
    TopK { k: usize },
    Threshold { level: f64 },
}

/// Indices of the `k` largest probabilities, ascending. Ties go to the
/// lower index.
pub fn top_k_support(probs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

pub fn select_support(probs: &[f64], mode: SupportMode) -> Vec<usize> {
    match mode {
        SupportMode::TopK { k } => top_k_support(probs, k),
        SupportMode::Threshold { level } => (0..probs.len()).filter(|&i| probs[i] > level).collect(),
    }
}

/// Tap probabilities and selected supports for a batch of observations.
pub fn detect_taps(model: &ModelState, observations: &[ComplexMatrix], mode: SupportMode) -> Result<(Tensor, Vec<Vec<usize>>)> {
    let rows: Vec<Vec<f64>> = observations.iter().map(complex_to_real).collect();
    let probs = model.predict(&rows_to_tensor(&rows)?)?;
    let supports = (0..probs.rows()).map(|r| select_support(probs.row(r), mode)).collect();
    Ok((probs, supports))
}

/// Least squares on a detected support; an empty support gives the zero
/// channel.
pub fn estimate_on_support(task: &TapTask, y: &ComplexMatrix, support: &[usize]) -> Result<ComplexMatrix> {
    if support.is_empty() {
        return Ok(ComplexMatrix::zeros(task.cfg.n, 1));
    }
    oracle_ls(y, &task.p, support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_for;

    fn small() -> TapTaskConfig {
        TapTaskConfig { n: 32, m: 16, k: 2, window: 8, band: 32 }
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_support(&[0.9, 0.1, 0.2], 1), vec![0]);
        assert_eq!(top_k_support(&[0.3, 0.8, 0.3, 0.1], 2), vec![0, 1]);
        assert_eq!(select_support(&[0.6, 0.4, 0.51], SupportMode::Threshold { level: 0.5 }), vec![0, 2]);
    }

    #[test]
    fn config_validation() {
        assert!(TapTaskConfig { k: 32, ..small() }.validate().is_err());
        assert!(TapTaskConfig { m: 40, ..small() }.validate().is_err());
        assert!(small().validate().is_ok());
    }

    #[test]
    fn labels_sum_to_k_and_dataset_is_deterministic() {
        let build = || {
            let mut rng = rng_for(5, 0);
            let task = TapTask::new(small(), &mut rng).unwrap();
            let s = generate_tap_samples(&task, 40, SnrDraw::Fixed { db: 10.0 }, &mut rng).unwrap();
            build_tap_dataset(&task, &s, 10, 5).unwrap()
        };
        let ds = build();
        for r in 0..ds.len() {
            assert_eq!(ds.labels.row(r).iter().sum::<f64>(), 2.0);
        }
        assert_eq!(ds.content_hash(), build().content_hash());
        assert!(ds.splits_disjoint());
    }

    #[test]
    fn input_power_matches_snr() {
        let mut rng = rng_for(6, 0);
        let task = TapTask::new(small(), &mut rng).unwrap();
        let snr = 5.0;
        let s = generate_tap_samples(&task, 4000, SnrDraw::Fixed { db: snr }, &mut rng).unwrap();
        let power = s.iter().map(|x| x.y.frobenius_norm_sqr()).sum::<f64>() / (4000.0 * 16.0);
        let want = 1.0 + 10f64.powf(-snr / 10.0);
        assert!((power / want - 1.0).abs() < 0.05, "{power} vs {want}");
    }

    #[test]
    fn detector_outputs_probabilities_and_rejects_bad_width() {
        let task = small();
        let spec = tap_detector_spec(&task, &[8], true).unwrap();
        let m = ModelState::new(spec, 1).unwrap();
        let y = ComplexMatrix::from_fn(16, 1, |i, _| crate::C64::new(i as f64, -1.0));
        let (p, sup) = detect_taps(&m, &[y.clone(), y], SupportMode::TopK { k: 2 }).unwrap();
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(sup[0].len(), 2);
        let wrong = ComplexMatrix::zeros(15, 1);
        assert!(detect_taps(&m, &[wrong], SupportMode::TopK { k: 1 }).is_err());
    }

    #[test]
    fn noiseless_single_tap_is_learned() {
        let cfg = TapTaskConfig { n: 16, m: 16, k: 1, window: 16, band: 16 };
        let mut rng = rng_for(8, 0);
        let task = TapTask::new(cfg, &mut rng).unwrap();
        let s = generate_tap_samples(&task, 1200, SnrDraw::Fixed { db: 200.0 }, &mut rng).unwrap();
        let ds = build_tap_dataset(&task, &s, 200, 8).unwrap();
        let dcfg = TapDetectorConfig {
            hidden: vec![64],
            batch_norm: true,
            train: TrainConfig { learning_rate: 1.0, batch_size: 32, epochs: 30, seed: 2, loss: LossKind::Bce },
        };
        let (model, _) = train_tap_detector(&cfg, &ds, &dcfg).unwrap();
        let probs = model.predict(&ds.test_inputs()).unwrap();
        let labels = ds.test_labels();
        let hits = (0..probs.rows())
            .filter(|&r| top_k_support(probs.row(r), 1) == top_k_support(labels.row(r), 1))
            .count();
        assert!(hits as f64 / probs.rows() as f64 >= 0.99, "{hits}");
    }
}
