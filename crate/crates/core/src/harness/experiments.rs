//! Per-experiment pipelines. Every random draw comes from a stream derived
//! from the seed, so generating, training and evaluating separately sees
//! the same data as one combined run.

use std::collections::BTreeMap;
use std::time::Instant;

use super::{metric_detect_prob, metric_mse, ExperimentConfig, ExperimentId, NamedModels, ResultRow};
use crate::classical::{lmmse_filter, min_norm_estimate, omp, oracle_ls};
use crate::dataset::{ArrayBundle, NamedArray};
use crate::dl::*;
use crate::error::Result;
use crate::gan::{
    downstream_mse, fine_tune, generate_samples, meta_train, train_downstream, DownstreamConfig, DownstreamTask, GanConfig, GanState, MetaConfig,
    TapFamily,
};
use crate::linalg::{matmul, ComplexMatrix, C64};
use crate::nn::{LossKind, ModelState, Tensor, TrainConfig};
use crate::random::{noise_variance, rng_for};

const TASK: u64 = 0;
const TRAIN: u64 = 10;
const TEST: u64 = 100;
const NOISE: u64 = 200;
const GAN_META: u64 = 300;
const GAN_FINE: u64 = 301;
const GAN_VANILLA: u64 = 302;
const GAN_SAMPLE: u64 = 310;

/// Datasets of one seed.
pub fn generate_seed(cfg: &ExperimentConfig, seed: u64) -> Result<ArrayBundle> {
    let scenario = serde_json::json!({ "experiment": cfg.experiment, "sizes": cfg.sizes, "snr_grid_db": cfg.snr_grid_db });
    let mut bundle = ArrayBundle::new(seed, scenario);
    match cfg.experiment {
        ExperimentId::TapMse => {
            let task = tap_task(cfg, seed)?;
            push_taps(&mut bundle, "train", &tap_train(cfg, &task, seed)?)?;
            for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
                push_taps(&mut bundle, &format!("test{i}"), &tap_test(cfg, &task, seed, i, snr)?)?;
            }
        }
        ExperimentId::AoaAblation => {
            let task = aoa_task(cfg)?;
            push_aoa(&mut bundle, "train", &aoa_train(cfg, &task, seed)?)?;
            for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
                push_aoa(&mut bundle, &format!("test{i}"), &aoa_test(cfg, &task, seed, i, snr)?)?;
            }
        }
        ExperimentId::ParamNmse => {
            for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
                let (task, train, test) = param_data(cfg, seed, i, snr)?;
                push_sequences(&mut bundle, &task, &format!("train{i}"), &train)?;
                push_sequences(&mut bundle, &task, &format!("test{i}"), &test)?;
            }
        }
        ExperimentId::CsiSweep => {
            for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
                let (train, test) = csi_data(cfg, seed, i, snr)?;
                bundle.push(tensor_array(&format!("train{i}"), &train))?;
                bundle.push(tensor_array(&format!("test{i}"), &test))?;
            }
        }
        ExperimentId::GanMeta => {
            let d = gan_data(cfg, seed)?;
            for (j, s) in d.sources.iter().enumerate() {
                bundle.push(tensor_array(&format!("source{j}"), s))?;
            }
            bundle.push(tensor_array("few_shot", &d.few))?;
            bundle.push(tensor_array("real", &d.real))?;
            bundle.push(tensor_array("test", &d.test))?;
        }
    }
    Ok(bundle)
}

/// Trains every network the experiment evaluates (for `gan_meta`, the two
/// GANs; downstream estimators are part of evaluation).
pub fn train_seed(cfg: &ExperimentConfig, seed: u64) -> Result<NamedModels> {
    let mut times = BTreeMap::new();
    train_timed(cfg, seed, &mut times)
}

/// Rows of one seed. Trains first unless `models` is given.
pub fn evaluate_seed(cfg: &ExperimentConfig, seed: u64, models: Option<&NamedModels>, record_wall_time: bool) -> Result<Vec<ResultRow>> {
    let mut train_times = BTreeMap::new();
    let trained;
    let models = match models {
        Some(m) => m,
        None => {
            trained = train_timed(cfg, seed, &mut train_times)?;
            &trained
        }
    };
    let mut out = Rows { cfg, seed, record_wall_time, train_times, rows: Vec::new() };
    match cfg.experiment {
        ExperimentId::TapMse => eval_taps(cfg, seed, models, &mut out)?,
        ExperimentId::AoaAblation => eval_aoa(cfg, seed, models, &mut out)?,
        ExperimentId::ParamNmse => eval_param(cfg, seed, models, &mut out)?,
        ExperimentId::CsiSweep => eval_csi(cfg, seed, models, &mut out)?,
        ExperimentId::GanMeta => eval_gan(cfg, seed, models, &mut out)?,
    }
    Ok(out.rows)
}

struct Rows<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    record_wall_time: bool,
    /// Training seconds per method, added to each of its rows.
    train_times: BTreeMap<String, f64>,
    rows: Vec<ResultRow>,
}

impl Rows<'_> {
    fn push(&mut self, method: &str, snr_db: f64, metric: &str, value: f64, started: Instant) {
        let wall = if self.record_wall_time {
            started.elapsed().as_secs_f64() + self.train_times.get(method).copied().unwrap_or(0.0)
        } else {
            0.0
        };
        self.rows.push(ResultRow {
            experiment: self.cfg.experiment.to_string(),
            method: method.to_owned(),
            snr_db,
            seed: self.seed,
            metric: metric.to_owned(),
            value,
            wall_time_s: wall,
        });
    }
}

fn train_timed(cfg: &ExperimentConfig, seed: u64, times: &mut BTreeMap<String, f64>) -> Result<NamedModels> {
    let mut models = BTreeMap::new();
    let mut timed = |method: &str, name: String, f: &mut dyn FnMut() -> Result<ModelState>| -> Result<()> {
        let t0 = Instant::now();
        let m = f()?;
        *times.entry(method.to_owned()).or_insert(0.0) += t0.elapsed().as_secs_f64();
        models.insert(name, m);
        Ok(())
    };
    match cfg.experiment {
        ExperimentId::TapMse => {
            let task = tap_task(cfg, seed)?;
            let s = &cfg.train.tap;
            timed("dl", "dl".into(), &mut || {
                let samples = tap_train(cfg, &task, seed)?;
                let ds = build_tap_dataset(&task, &samples, 0, seed)?;
                let dcfg = TapDetectorConfig {
                    hidden: s.hidden.clone(),
                    batch_norm: s.batch_norm,
                    train: train_config(s.learning_rate, s.batch_size, s.epochs, seed),
                };
                Ok(train_tap_detector(&task.cfg, &ds, &dcfg)?.0)
            })?;
        }
        ExperimentId::AoaAblation => {
            let task = aoa_task(cfg)?;
            let s = &cfg.train.aoa;
            let ds = build_aoa_dataset(&task, &aoa_train(cfg, &task, seed)?, 0, seed)?;
            let train = train_config(s.learning_rate, s.batch_size, s.epochs, seed);
            for (arm, v) in AoaVariant::ablation(s.dropout, s.ensemble) {
                let t0 = Instant::now();
                let members = train_aoa_detector(&task, &ds, &s.hidden, v, &train)?;
                *times.entry(arm.to_owned()).or_insert(0.0) += t0.elapsed().as_secs_f64();
                for (e, m) in members.into_iter().enumerate() {
                    models.insert(format!("{arm}.{e}"), m);
                }
            }
        }
        ExperimentId::ParamNmse => {
            let s = &cfg.train.param;
            for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
                let (task, train, _) = param_data(cfg, seed, i, snr)?;
                let pcfg = ParamEstimatorConfig {
                    hidden: s.hidden,
                    batch_size: s.batch_size,
                    warmup_epochs: s.warmup_epochs,
                    warmup_lr: s.warmup_lr,
                    recon_epochs: s.recon_epochs,
                    recon_lr: s.recon_lr,
                    warmup_lr_final: s.warmup_lr_final,
                    recon_lr_final: s.recon_lr_final,
                    fresh_data: s.fresh_data,
                    seed,
                };
                timed("lstm", format!("lstm.snr{i}"), &mut || Ok(train_param_estimator(&task, &train, &pcfg)?.0))?;
            }
        }
        ExperimentId::CsiSweep => {
            for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
                let (train, _) = csi_data(cfg, seed, i, snr)?;
                for &nl in &cfg.sizes.latent_dims {
                    let ccfg = csi_config(cfg, nl, seed);
                    timed(&csi_method(nl), format!("{}.snr{i}", csi_method(nl)), &mut || Ok(train_csi_autoencoder(&train, &ccfg)?.0.model))?;
                }
            }
        }
        ExperimentId::GanMeta => {
            let d = gan_data(cfg, seed)?;
            let mcfg = meta_config(cfg);
            let init = GanState::new(gan_config(cfg), seed)?;
            let t0 = Instant::now();
            let meta_init = meta_train(&init, &d.sources, &mcfg, &mut rng_for(seed, GAN_META))?;
            let (meta, _) = fine_tune(&meta_init, &d.few, &mcfg, &mut rng_for(seed, GAN_FINE))?;
            times.insert("meta_gan".into(), t0.elapsed().as_secs_f64());
            let t0 = Instant::now();
            let (vanilla, _) = fine_tune(&init, &d.few, &mcfg, &mut rng_for(seed, GAN_VANILLA))?;
            times.insert("vanilla_gan".into(), t0.elapsed().as_secs_f64());
            for (name, g) in [("meta_gan", meta), ("vanilla_gan", vanilla)] {
                models.insert(format!("{name}.generator"), g.generator);
                models.insert(format!("{name}.discriminator"), g.discriminator);
            }
        }
    }
    Ok(NamedModels(models))
}

fn train_config(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { learning_rate, batch_size, epochs, seed, loss: LossKind::Mse }
}

fn tensor_array(name: &str, t: &Tensor) -> NamedArray {
    NamedArray::real(name, t.shape().to_vec(), t.data().to_vec())
}

fn stack_columns(cols: &[&ComplexMatrix]) -> NamedArrayData {
    let len = cols.first().map_or(0, |c| c.rows());
    NamedArrayData {
        shape: vec![cols.len(), len],
        data: cols.iter().flat_map(|c| c.as_slice().iter().copied()).collect(),
    }
}

struct NamedArrayData {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl NamedArrayData {
    fn named(self, name: String) -> NamedArray {
        NamedArray::complex(name, self.shape, self.data)
    }
}

fn support_array(name: String, supports: &[&[usize]]) -> NamedArray {
    let width = supports.first().map_or(0, |s| s.len());
    NamedArray::real(name, vec![supports.len(), width], supports.iter().flat_map(|s| s.iter().map(|&i| i as f64)).collect())
}

// ---------------------------------------------------------------------------
// Tap detection

fn tap_task(cfg: &ExperimentConfig, seed: u64) -> Result<TapTask> {
    let z = &cfg.sizes;
    TapTask::new(TapTaskConfig { n: z.n, m: z.m, k: z.k, window: z.window, band: z.band }, &mut rng_for(seed, TASK))
}

fn tap_train(cfg: &ExperimentConfig, task: &TapTask, seed: u64) -> Result<Vec<TapSample>> {
    let s = &cfg.train.tap;
    let snr = SnrDraw::Uniform { low_db: s.train_snr_db.0, high_db: s.train_snr_db.1 };
    generate_tap_samples(task, s.train_samples, snr, &mut rng_for(seed, TRAIN))
}

fn tap_test(cfg: &ExperimentConfig, task: &TapTask, seed: u64, i: usize, snr: f64) -> Result<Vec<TapSample>> {
    generate_tap_samples(task, cfg.train.tap.test_samples, SnrDraw::Fixed { db: snr }, &mut rng_for(seed, TEST + i as u64))
}

fn push_taps(bundle: &mut ArrayBundle, prefix: &str, samples: &[TapSample]) -> Result<()> {
    bundle.push(stack_columns(&samples.iter().map(|s| &s.y).collect::<Vec<_>>()).named(format!("{prefix}_y")))?;
    bundle.push(stack_columns(&samples.iter().map(|s| &s.h).collect::<Vec<_>>()).named(format!("{prefix}_h")))?;
    bundle.push(NamedArray::real(format!("{prefix}_snr_db"), vec![samples.len()], samples.iter().map(|s| s.snr_db).collect()))
}

fn eval_taps(cfg: &ExperimentConfig, seed: u64, models: &NamedModels, out: &mut Rows) -> Result<()> {
    let task = tap_task(cfg, seed)?;
    let z = &cfg.sizes;
    let model = models.get("dl")?;
    // prior known to LMMSE: every tap in the window has variance 1/window
    let prior = ComplexMatrix::diag(&(0..z.n).map(|i| C64::new(if i < z.window { 1.0 / z.window as f64 } else { 0.0 }, 0.0)).collect::<Vec<_>>());
    for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
        let test = tap_test(cfg, &task, seed, i, snr)?;
        let count = test.len() as f64;
        let ys = ComplexMatrix::from_fn(z.m, test.len(), |r, c| test[c].y[(r, 0)]);
        let column_mse = |est: &ComplexMatrix| -> Result<f64> {
            let mut acc = 0.0;
            for (c, s) in test.iter().enumerate() {
                acc += metric_mse(&est.column(c), &s.h)?;
            }
            Ok(acc / count)
        };

        let t0 = Instant::now();
        let v = column_mse(&min_norm_estimate(&ys, &task.p)?)?;
        out.push("ls", snr, "mse", v, t0);

        let t0 = Instant::now();
        let filter = lmmse_filter(&task.p, &prior, noise_variance(1.0, snr))?;
        let v = column_mse(&matmul(&filter, &ys)?)?;
        out.push("lmmse", snr, "mse", v, t0);

        let t0 = Instant::now();
        let mut acc = 0.0;
        for s in &test {
            acc += metric_mse(&omp(&s.y, &task.p, z.k, 0.0)?.to_dense(z.n)?, &s.h)?;
        }
        out.push("omp", snr, "mse", acc / count, t0);

        let t0 = Instant::now();
        let observations: Vec<ComplexMatrix> = test.iter().map(|s| s.y.clone()).collect();
        let (_, supports) = detect_taps(model, &observations, SupportMode::TopK { k: z.k })?;
        let mut acc = 0.0;
        for (s, sup) in test.iter().zip(&supports) {
            acc += metric_mse(&estimate_on_support(&task, &s.y, sup)?, &s.h)?;
        }
        out.push("dl", snr, "mse", acc / count, t0);

        let t0 = Instant::now();
        let mut acc = 0.0;
        for s in &test {
            acc += metric_mse(&oracle_ls(&s.y, &task.p, &s.support)?, &s.h)?;
        }
        out.push("oracle", snr, "mse", acc / count, t0);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// AoA ablation

fn aoa_task(cfg: &ExperimentConfig) -> Result<AoaTask> {
    AoaTask::new(AoaTaskConfig {
        antennas: cfg.sizes.n_t,
        grid: cfg.sizes.g,
        paths: cfg.sizes.paths,
        power_spread_db: cfg.train.aoa.power_spread_db,
        d_over_lambda: 0.5,
    })
}

fn aoa_train(cfg: &ExperimentConfig, task: &AoaTask, seed: u64) -> Result<Vec<AoaSample>> {
    let s = &cfg.train.aoa;
    let snr = SnrDraw::Uniform { low_db: s.train_snr_db.0, high_db: s.train_snr_db.1 };
    generate_aoa_samples(task, s.train_samples, snr, &mut rng_for(seed, TRAIN))
}

fn aoa_test(cfg: &ExperimentConfig, task: &AoaTask, seed: u64, i: usize, snr: f64) -> Result<Vec<AoaSample>> {
    generate_aoa_samples(task, cfg.train.aoa.test_samples, SnrDraw::Fixed { db: snr }, &mut rng_for(seed, TEST + i as u64))
}

fn push_aoa(bundle: &mut ArrayBundle, prefix: &str, samples: &[AoaSample]) -> Result<()> {
    bundle.push(stack_columns(&samples.iter().map(|s| &s.y).collect::<Vec<_>>()).named(format!("{prefix}_y")))?;
    bundle.push(support_array(format!("{prefix}_support"), &samples.iter().map(|s| s.support.as_slice()).collect::<Vec<_>>()))
}

fn eval_aoa(cfg: &ExperimentConfig, seed: u64, models: &NamedModels, out: &mut Rows) -> Result<()> {
    let task = aoa_task(cfg)?;
    let s = &cfg.train.aoa;
    let tests: Vec<(Vec<AoaSample>, Tensor)> = cfg
        .snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let t = aoa_test(cfg, &task, seed, i, snr)?;
            let ds = build_aoa_dataset(&task, &t, 0, seed)?;
            Ok((t, ds.inputs))
        })
        .collect::<Result<_>>()?;
    for (arm, v) in AoaVariant::ablation(s.dropout, s.ensemble) {
        let members: Vec<ModelState> = (0..v.ensemble.max(1)).map(|e| models.get(&format!("{arm}.{e}")).cloned()).collect::<Result<_>>()?;
        for (&snr, (samples, inputs)) in cfg.snr_grid_db.iter().zip(&tests) {
            let t0 = Instant::now();
            let detected = detect_aoa(&task, &members, inputs)?;
            let mut acc = 0.0;
            for (d, x) in detected.iter().zip(samples) {
                acc += metric_detect_prob(d, &x.support)?;
            }
            out.push(arm, snr, "success", acc / samples.len() as f64, t0);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Parametric trajectory estimation

fn param_data(cfg: &ExperimentConfig, seed: u64, i: usize, snr: f64) -> Result<(ParamTask, Vec<ParamSequence>, Vec<ParamSequence>)> {
    let z = &cfg.sizes;
    let tcfg = ParamTaskConfig {
        n_rx: z.n_r,
        n_tx: z.n_t,
        paths: z.paths,
        intervals: z.intervals,
        beams: z.beams,
        snr_db: snr,
        ..ParamTaskConfig::default()
    };
    let task = ParamTask::new(tcfg, &mut rng_for(seed, TASK))?;
    let s = &cfg.train.param;
    let train = generate_sequences(&task, s.train_sequences, &mut rng_for(seed, TRAIN + i as u64))?;
    let test = generate_sequences(&task, s.test_sequences, &mut rng_for(seed, TEST + i as u64))?;
    Ok((task, train, test))
}

fn push_sequences(bundle: &mut ArrayBundle, task: &ParamTask, prefix: &str, seqs: &[ParamSequence]) -> Result<()> {
    let l = task.cfg.intervals;
    let flat = |f: &dyn Fn(&ParamSequence) -> &Vec<ComplexMatrix>, width: usize| NamedArrayData {
        shape: vec![seqs.len(), l, width],
        data: seqs.iter().flat_map(|s| f(s).iter().flat_map(|m| m.as_slice().iter().copied())).collect(),
    };
    bundle.push(flat(&|s| &s.y, task.observation_dim()).named(format!("{prefix}_y")))?;
    bundle.push(flat(&|s| &s.h, task.channel_dim()).named(format!("{prefix}_h")))?;
    bundle.push(NamedArray::real(format!("{prefix}_sigma2"), vec![seqs.len(), l], seqs.iter().flat_map(|s| s.sigma2.iter().copied()).collect()))
}

fn eval_param(cfg: &ExperimentConfig, seed: u64, models: &NamedModels, out: &mut Rows) -> Result<()> {
    for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
        let (task, train, test) = param_data(cfg, seed, i, snr)?;
        let count = test.len() as f64;

        let t0 = Instant::now();
        let mut acc = 0.0;
        for s in &test {
            acc += sequence_nmse(&ls_sequence(&task, s)?, s)?;
        }
        out.push("ls", snr, "nmse", acc / count, t0);

        let t0 = Instant::now();
        let r = channel_covariance(&task, &train)?;
        let mut acc = 0.0;
        for s in &test {
            acc += sequence_nmse(&lmmse_sequence(&task, &r, s)?, s)?;
        }
        out.push("lmmse", snr, "nmse", acc / count, t0);

        let t0 = Instant::now();
        let est = estimate_params(&task, models.get(&format!("lstm.snr{i}"))?, &test)?;
        let mut acc = 0.0;
        for (e, s) in est.iter().zip(&test) {
            acc += sequence_nmse(&stacked_estimate(&task, e), s)?;
        }
        out.push("lstm", snr, "nmse", acc / count, t0);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSI feedback

fn csi_method(nl: usize) -> String {
    format!("ae_nl{nl}")
}

fn csi_config(cfg: &ExperimentConfig, nl: usize, seed: u64) -> CsiCodecConfig {
    let s = &cfg.train.csi;
    CsiCodecConfig {
        n_t: cfg.sizes.n_t,
        n_r: cfg.sizes.n_r,
        latent_dim: nl,
        hidden: s.hidden.clone(),
        train: train_config(s.learning_rate, s.batch_size, s.epochs, seed),
    }
}

fn csi_data(cfg: &ExperimentConfig, seed: u64, i: usize, snr: f64) -> Result<(Tensor, Tensor)> {
    let z = &cfg.sizes;
    let s = &cfg.train.csi;
    let train = csi_channels(z.n_t, z.n_r, z.csi_paths, s.train_samples, snr, &mut rng_for(seed, TRAIN + i as u64))?;
    let test = csi_channels(z.n_t, z.n_r, z.csi_paths, s.test_samples, snr, &mut rng_for(seed, TEST + i as u64))?;
    Ok((train, test))
}

fn eval_csi(cfg: &ExperimentConfig, seed: u64, models: &NamedModels, out: &mut Rows) -> Result<()> {
    for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
        let (_, test) = csi_data(cfg, seed, i, snr)?;
        for &nl in &cfg.sizes.latent_dims {
            let method = csi_method(nl);
            let t0 = Instant::now();
            let model = models.get(&format!("{method}.snr{i}"))?;
            let rec = model.predict(&test)?;
            out.push(&method, snr, "mse", csi_mse(&test, &rec), t0);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Meta-learned GAN

struct GanData {
    sources: Vec<Tensor>,
    few: Tensor,
    real: Tensor,
    test: Tensor,
}

fn gan_config(cfg: &ExperimentConfig) -> GanConfig {
    let s = &cfg.train.gan;
    GanConfig {
        latent_dim: s.latent_dim,
        generator_hidden: s.hidden.clone(),
        discriminator_hidden: s.hidden.clone(),
        ..GanConfig::new(2 * cfg.sizes.taps)
    }
}

fn meta_config(cfg: &ExperimentConfig) -> MetaConfig {
    let s = &cfg.train.gan;
    MetaConfig {
        alpha: s.alpha,
        beta: s.beta,
        gamma: s.alpha,
        inner_steps: s.inner_steps,
        meta_iterations: s.meta_iterations,
        fine_tune_steps: s.fine_tune_steps,
        batch_size: s.batch_size,
    }
}

fn gan_data(cfg: &ExperimentConfig, seed: u64) -> Result<GanData> {
    let s = &cfg.train.gan;
    let taps = cfg.sizes.taps;
    let mut rng = rng_for(seed, TRAIN);
    let sources = s.source_rates_hz.iter().map(|&r| TapFamily::eva(r, taps).samples(s.source_samples, &mut rng)).collect::<Result<_>>()?;
    let target = TapFamily::eva(s.target_rate_hz, taps);
    let few = target.samples(s.few_shot, &mut rng)?;
    let real = target.samples(s.real_samples, &mut rng)?;
    let test = target.samples(s.test_samples, &mut rng_for(seed, TEST))?;
    Ok(GanData { sources, few, real, test })
}

fn eval_gan(cfg: &ExperimentConfig, seed: u64, models: &NamedModels, out: &mut Rows) -> Result<()> {
    let s = &cfg.train.gan;
    let d = gan_data(cfg, seed)?;
    let gcfg = gan_config(cfg);
    let state = |name: &str| -> Result<GanState> {
        Ok(GanState {
            cfg: gcfg.clone(),
            generator: models.get(&format!("{name}.generator"))?.clone(),
            discriminator: models.get(&format!("{name}.discriminator"))?.clone(),
        })
    };
    let meta = generate_samples(&state("meta_gan")?, s.generated_samples, &mut rng_for(seed, GAN_SAMPLE))?;
    let vanilla = generate_samples(&state("vanilla_gan")?, s.generated_samples, &mut rng_for(seed, GAN_SAMPLE + 1))?;
    let dcfg = DownstreamConfig {
        pilots: cfg.sizes.pilots,
        hidden: s.downstream_hidden.clone(),
        train: train_config(s.downstream_lr, s.batch_size, s.downstream_epochs, seed),
    };
    for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
        let task = DownstreamTask::new(cfg.sizes.taps, cfg.sizes.pilots, snr, &mut rng_for(seed, TASK + i as u64))?;
        let test_y = task.observe(&d.test, &mut rng_for(seed, TEST + 1 + i as u64))?;
        for (method, channels) in [("real", &d.real), ("meta_gan", &meta), ("vanilla_gan", &vanilla), ("few_real", &d.few)] {
            let t0 = Instant::now();
            // same observation noise and initialization for every method
            let model = train_downstream(&task, channels, &dcfg, &mut rng_for(seed, NOISE + i as u64))?;
            out.push(method, snr, "mse", downstream_mse(&model, &test_y, &d.test)?, t0);
        }
    }
    Ok(())
}
