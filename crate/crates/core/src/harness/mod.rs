//! Experiment runs: a JSON-serializable description (seeds, SNR grid,
//! sizes, training settings), per-experiment pipelines and the CSV result
//! table they fill.

mod experiments;
mod profiles;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::nn::{load_checkpoint, save_checkpoint, ModelState};

pub use experiments::{evaluate_seed, generate_seed, train_seed};
pub use profiles::{figure_config, Figure, Profile};

pub const CSV_HEADER: &str = "experiment,method,snr_db,seed,metric,value,wall_time_s";

// ---------------------------------------------------------------------------
// Metrics

/// `‖ĥ − h‖² / len`.
pub fn metric_mse(est: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    let len = truth.rows() * truth.cols();
    if len == 0 {
        return Err(Error::shape("metric_mse", "empty reference"));
    }
    Ok(est.sub(truth)?.frobenius_norm_sqr() / len as f64)
}

/// `‖Ĥ − H‖²_F / ‖H‖²_F`.
pub fn metric_nmse(est: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    let denom = truth.frobenius_norm_sqr();
    if denom == 0.0 {
        return Err(Error::singular("metric_nmse", "reference has zero norm"));
    }
    Ok(est.sub(truth)?.frobenius_norm_sqr() / denom)
}

/// `|Ω̂ ∩ Ω| / |Ω|`. Duplicate indices count once.
pub fn metric_detect_prob(est: &[usize], truth: &[usize]) -> Result<f64> {
    let truth: std::collections::BTreeSet<usize> = truth.iter().copied().collect();
    if truth.is_empty() {
        return Err(Error::config("detection probability needs a nonempty true support"));
    }
    let est: std::collections::BTreeSet<usize> = est.iter().copied().collect();
    Ok(est.intersection(&truth).count() as f64 / truth.len() as f64)
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    TapMse,
    AoaAblation,
    ParamNmse,
    CsiSweep,
    GanMeta,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [Self::TapMse, Self::AoaAblation, Self::ParamNmse, Self::CsiSweep, Self::GanMeta];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TapMse => "tap_mse",
            Self::AoaAblation => "aoa_ablation",
            Self::ParamNmse => "param_nmse",
            Self::CsiSweep => "csi_sweep",
            Self::GanMeta => "gan_meta",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| Error::UnknownExperiment(s.to_owned()))
    }
}

/// Problem sizes. Each experiment reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sizes {
    /// Tap task: channel length, pilots, nonzero taps, tap window, pilot band.
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub window: usize,
    pub band: usize,
    /// Transmit antennas; also the AoA array size.
    pub n_t: usize,
    pub n_r: usize,
    /// AoA grid size.
    pub g: usize,
    pub latent_dims: Vec<usize>,
    /// Coherence intervals per trajectory.
    pub intervals: usize,
    /// Paths for the AoA and trajectory tasks.
    pub paths: usize,
    /// Pilot beams per interval.
    pub beams: usize,
    pub csi_paths: usize,
    /// GAN task: taps per channel and downstream pilots.
    pub taps: usize,
    pub pilots: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Self {
            n: 256,
            m: 64,
            k: 6,
            window: 32,
            band: 128,
            n_t: 16,
            n_r: 4,
            g: 32,
            latent_dims: vec![16, 64, 128],
            intervals: 8,
            paths: 2,
            beams: 20,
            csi_paths: 3,
            taps: 16,
            pilots: 8,
        }
    }
}

impl Sizes {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("n", self.n),
            ("m", self.m),
            ("k", self.k),
            ("window", self.window),
            ("band", self.band),
            ("n_t", self.n_t),
            ("n_r", self.n_r),
            ("g", self.g),
            ("intervals", self.intervals),
            ("paths", self.paths),
            ("beams", self.beams),
            ("csi_paths", self.csi_paths),
            ("taps", self.taps),
            ("pilots", self.pilots),
        ];
        if let Some((name, _)) = scalars.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("size `{name}` must be positive")));
        }
        if self.latent_dims.is_empty() || self.latent_dims.contains(&0) {
            return Err(Error::config("latent_dims must be a nonempty list of positive sizes"));
        }
        if self.k > self.window || self.window > self.n {
            return Err(Error::config(format!("need k <= window <= n, got {} / {} / {}", self.k, self.window, self.n)));
        }
        if self.beams < self.n_t {
            return Err(Error::config(format!("{} beams cannot resolve {} transmit antennas", self.beams, self.n_t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TapSettings {
    pub train_samples: usize,
    pub test_samples: usize,
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Training SNRs are drawn uniformly from this range.
    pub train_snr_db: (f64, f64),
}

impl Default for TapSettings {
    fn default() -> Self {
        Self {
            train_samples: 20_000,
            test_samples: 500,
            hidden: vec![256, 256],
            batch_norm: true,
            learning_rate: 2.0,
            batch_size: 64,
            epochs: 30,
            train_snr_db: (10.0, 30.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoaSettings {
    pub train_samples: usize,
    pub test_samples: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub ensemble: usize,
    pub train_snr_db: (f64, f64),
    pub power_spread_db: f64,
}

impl Default for AoaSettings {
    fn default() -> Self {
        Self {
            train_samples: 2000,
            test_samples: 1000,
            hidden: vec![256, 256],
            learning_rate: 0.1,
            batch_size: 64,
            epochs: 100,
            dropout: 0.3,
            ensemble: 3,
            train_snr_db: (-5.0, 20.0),
            power_spread_db: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSettings {
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub warmup_lr: f64,
    pub warmup_lr_final: Option<f64>,
    pub recon_epochs: usize,
    pub recon_lr: f64,
    pub recon_lr_final: Option<f64>,
    pub fresh_data: bool,
}

impl Default for ParamSettings {
    fn default() -> Self {
        Self {
            train_sequences: 3000,
            test_sequences: 300,
            hidden: 128,
            batch_size: 32,
            warmup_epochs: 100,
            warmup_lr: 6.0,
            warmup_lr_final: None,
            recon_epochs: 80,
            recon_lr: 2e-5,
            recon_lr_final: None,
            fresh_data: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsiSettings {
    pub train_samples: usize,
    pub test_samples: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for CsiSettings {
    fn default() -> Self {
        Self {
            train_samples: 4000,
            test_samples: 1000,
            hidden: vec![256],
            learning_rate: 0.05,
            batch_size: 64,
            epochs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanSettings {
    /// Sample rates of the EVA source tasks used for meta-training.
    pub source_rates_hz: Vec<f64>,
    pub target_rate_hz: f64,
    pub source_samples: usize,
    /// Real target samples available for fine-tuning.
    pub few_shot: usize,
    /// Real target samples for the reference estimator.
    pub real_samples: usize,
    pub test_samples: usize,
    pub generated_samples: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub inner_steps: usize,
    pub meta_iterations: usize,
    pub fine_tune_steps: usize,
    pub batch_size: usize,
    pub downstream_hidden: Vec<usize>,
    pub downstream_lr: f64,
    pub downstream_epochs: usize,
}

impl Default for GanSettings {
    fn default() -> Self {
        Self {
            source_rates_hz: vec![2e6, 3e6, 5e6, 6e6],
            target_rate_hz: 4e6,
            source_samples: 1000,
            few_shot: 800,
            real_samples: 4000,
            test_samples: 2000,
            generated_samples: 4000,
            latent_dim: 16,
            hidden: vec![64, 64],
            alpha: 0.02,
            beta: 0.005,
            inner_steps: 1,
            meta_iterations: 3000,
            fine_tune_steps: 600,
            batch_size: 64,
            downstream_hidden: vec![64],
            downstream_lr: 0.05,
            downstream_epochs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub tap: TapSettings,
    pub aoa: AoaSettings,
    pub param: ParamSettings,
    pub csi: CsiSettings,
    pub gan: GanSettings,
}

/// One experiment over an SNR grid and a list of seeds.
///
/// The grid means test SNRs for `tap_mse` and `aoa_ablation`, the operating
/// SNR of the trajectory task for `param_nmse`, the estimate SNR of the fed
/// back channels for `csi_sweep`, and the downstream pilot SNR for
/// `gan_meta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub snr_grid_db: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sizes: Sizes,
    #[serde(default)]
    pub train: TrainSettings,
    /// CSV destination; relative paths resolve against the output directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid_db.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("snr_grid_db and seeds must be nonempty"));
        }
        if let Some(s) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::config(format!("SNR {s} is not finite")));
        }
        let mut snrs = self.snr_grid_db.clone();
        snrs.sort_by(f64::total_cmp);
        if snrs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate SNR in grid"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate seed"));
        }
        self.sizes.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Where the CSV goes under `out_dir`.
    pub fn csv_path(&self, out_dir: &Path) -> PathBuf {
        match &self.output {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => out_dir.join(p),
            None => out_dir.join(format!("{}.csv", self.experiment)),
        }
    }
}

// ---------------------------------------------------------------------------
// Results

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub snr_db: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub wall_time_s: f64,
}

impl ResultRow {
    fn key(&self) -> (&str, &str, f64, u64, &str) {
        (&self.experiment, &self.method, self.snr_db, self.seed, &self.metric)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rejects non-finite values and times.
    pub fn push(&mut self, row: ResultRow) -> Result<()> {
        if !row.value.is_finite() || !row.wall_time_s.is_finite() || !row.snr_db.is_finite() {
            return Err(Error::NonFinite(format!(
                "{} / {} at {} dB, seed {}: {} = {}",
                row.experiment, row.method, row.snr_db, row.seed, row.metric, row.value
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Sorts by (experiment, method, snr, seed, metric) and rejects repeated keys.
    pub fn finalize(&mut self) -> Result<()> {
        self.rows.sort_by(|a, b| {
            let (ka, kb) = (a.key(), b.key());
            ka.0.cmp(kb.0)
                .then(ka.1.cmp(kb.1))
                .then(ka.2.total_cmp(&kb.2))
                .then(ka.3.cmp(&kb.3))
                .then(ka.4.cmp(kb.4))
        });
        if let Some(w) = self.rows.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::config(format!("duplicate result row {:?}", w[0].key())));
        }
        Ok(())
    }

    pub fn methods(&self) -> Vec<String> {
        let mut m: Vec<String> = self.rows.iter().map(|r| r.method.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    /// `(seed, value)` pairs for one method, SNR and metric, in seed order.
    pub fn series(&self, method: &str, snr_db: f64, metric: &str) -> Vec<(u64, f64)> {
        let mut out: Vec<(u64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.snr_db == snr_db && r.metric == metric)
            .map(|r| (r.seed, r.value))
            .collect();
        out.sort_by_key(|p| p.0);
        out
    }

    /// Mean over seeds; `None` when there are no rows.
    pub fn mean(&self, method: &str, snr_db: f64, metric: &str) -> Option<f64> {
        let s = self.series(method, snr_db, metric);
        (!s.is_empty()).then(|| s.iter().map(|p| p.1).sum::<f64>() / s.len() as f64)
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER.split(','))
            .map_err(|e| Error::config(format!("csv: {e}")))?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.method.clone(),
                r.snr_db.to_string(),
                r.seed.to_string(),
                r.metric.clone(),
                format!("{:e}", r.value),
                r.wall_time_s.to_string(),
            ])
            .map_err(|e| Error::config(format!("csv: {e}")))?;
        }
        w.into_inner().map_err(|e| Error::config(format!("csv: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_csv_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let format_err = |detail: String| Error::Format { path: path.to_path_buf(), detail };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| format_err(e.to_string()))?;
        let header: Vec<String> = rdr.headers().map_err(|e| format_err(e.to_string()))?.iter().map(str::to_owned).collect();
        if header.join(",") != CSV_HEADER {
            return Err(format_err(format!("unexpected header {header:?}")));
        }
        let mut table = Self::new();
        for row in rdr.deserialize() {
            table.push(row.map_err(|e| format_err(e.to_string()))?)?;
        }
        Ok(table)
    }
}

// ---------------------------------------------------------------------------
// Trained models

/// Trained networks of one (experiment, seed), keyed by role.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedModels(pub BTreeMap<String, ModelState>);

impl NamedModels {
    fn prefix(experiment: ExperimentId, seed: u64) -> String {
        format!("{experiment}_s{seed}_")
    }

    pub fn get(&self, name: &str) -> Result<&ModelState> {
        self.0.get(name).ok_or_else(|| Error::config(format!("no trained model `{name}`")))
    }

    /// One checkpoint per model, `<experiment>_s<seed>_<name>.ckpt`.
    pub fn save(&self, dir: &Path, experiment: ExperimentId, seed: u64) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.0
            .iter()
            .map(|(name, model)| {
                let path = dir.join(format!("{}{name}.ckpt", Self::prefix(experiment, seed)));
                let meta = serde_json::json!({ "experiment": experiment, "seed": seed, "name": name });
                save_checkpoint(&path, model, seed, meta)?;
                Ok(path)
            })
            .collect()
    }

    pub fn load(dir: &Path, experiment: ExperimentId, seed: u64) -> Result<Self> {
        let prefix = Self::prefix(experiment, seed);
        let mut out = BTreeMap::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let Some(file) = path.file_name().and_then(|f| f.to_str()) else { continue };
            if let Some(name) = file.strip_prefix(&prefix).and_then(|f| f.strip_suffix(".ckpt")) {
                out.insert(name.to_owned(), load_checkpoint(&path)?.0);
            }
        }
        if out.is_empty() {
            return Err(Error::config(format!("no checkpoints for {experiment} seed {seed} in {}", dir.display())));
        }
        Ok(Self(out))
    }
}

// ---------------------------------------------------------------------------
// Running

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    /// Seeds evaluated concurrently; 0 and 1 both mean sequential.
    pub jobs: usize,
    /// Fill `wall_time_s`; otherwise it is 0 so reruns are byte-identical.
    pub record_wall_time: bool,
    /// Use checkpoints from here instead of training.
    pub models_dir: Option<PathBuf>,
}

/// Runs every seed of the experiment, `jobs` seeds at a time, and returns
/// the merged, sorted table. The first failing seed (in config order)
/// aborts the run.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultTable> {
    cfg.validate()?;
    let seeds = &cfg.seeds;
    let results: Mutex<Vec<Option<Result<Vec<ResultRow>>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= seeds.len() {
            break;
        }
        let seed = seeds[i];
        let res = match &opts.models_dir {
            Some(dir) => NamedModels::load(dir, cfg.experiment, seed).and_then(|m| evaluate_seed(cfg, seed, Some(&m), opts.record_wall_time)),
            None => evaluate_seed(cfg, seed, None, opts.record_wall_time),
        };
        results.lock().expect("no worker panicked")[i] = Some(res);
    };
    let jobs = opts.jobs.clamp(1, seeds.len());
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let mut table = ResultTable::new();
    for res in results.into_inner().expect("no worker panicked") {
        for row in res.expect("every seed ran")? {
            table.push(row)?;
        }
    }
    table.finalize()?;
    Ok(table)
}
