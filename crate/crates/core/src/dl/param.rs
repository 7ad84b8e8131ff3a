//! Parametric channel estimation over a sequence of coherence intervals.
//!
//! A dense projection and an LSTM map the pilot observations of each
//! interval to per-path angles and delays. Angles come out as (sin, cos)
//! pairs through `atan2`. Given those, the path gains enter the received
//! signal linearly, so they are solved in closed form by least squares
//! against the observation instead of being regressed. Training starts with
//! a short parameter-regression warm-up and continues on the
//! reconstruction loss `(1/L) Σ_l Σ_k ‖H_k^l − Ĥ_k^l‖²_F`.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{geometric_channel, mimo_signal, wrap_angle, GeometricChannelParams, LineTrajectory, MimoPilotConfig, Path};
use crate::classical::{lmmse_estimate, sample_covariance};
use crate::error::{Error, Result};
use crate::linalg::{matmul, solve_hermitian, ComplexMatrix, C64};
use crate::nn::{fit_with, Graph, LayerSpec, ModelState, NetworkSpec, Tensor, TrainConfig, Var, LossKind};
use crate::random::{add_noise, noise_variance, rng_for};

/// Network outputs per path: sin θ, cos θ, sin φ, cos φ, τ/τ_max.
pub const OUTPUTS_PER_PATH: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTaskConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    pub paths: usize,
    /// Coherence intervals per sequence, `L`.
    pub intervals: usize,
    /// Pilot beams per interval, `M`.
    pub beams: usize,
    pub subcarriers: Vec<usize>,
    pub f_s: f64,
    pub snr_db: f64,
    pub d_over_lambda: f64,
}

impl Default for ParamTaskConfig {
    fn default() -> Self {
        Self {
            n_rx: 4,
            n_tx: 16,
            paths: 2,
            intervals: 8,
            beams: 20,
            subcarriers: vec![0, 16, 32, 48],
            f_s: 120e3,
            snr_db: 10.0,
            d_over_lambda: 0.5,
        }
    }
}

/// Sounding, trajectory model and the constants shared by every sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTask {
    pub cfg: ParamTaskConfig,
    pub sounding: MimoPilotConfig,
    /// `(F S)ᵀ ⊗ W^H`, mapping `vec(H_k)` to one subcarrier's observation.
    pub x: ComplexMatrix,
    pub trajectory: LineTrajectory,
    pub tau_max: f64,
}

impl ParamTask {
    /// Random-phase analog precoder with a fully digital receiver.
    pub fn new<R: Rng + ?Sized>(cfg: ParamTaskConfig, rng: &mut R) -> Result<Self> {
        if cfg.intervals == 0 {
            return Err(Error::config("need at least one coherence interval"));
        }
        if cfg.paths != 2 {
            return Err(Error::config("the line-trajectory scenario has exactly two paths"));
        }
        if cfg.subcarriers.is_empty() || cfg.beams == 0 {
            return Err(Error::config("need pilot subcarriers and beams"));
        }
        let sounding = MimoPilotConfig::random_precoder(rng, cfg.n_rx, cfg.n_tx, cfg.beams, cfg.f_s, cfg.subcarriers.clone());
        let x = sounding.measurement_matrix();
        let trajectory = LineTrajectory::street(cfg.n_rx, cfg.n_tx);
        let tau_max = trajectory.max_delay();
        Ok(Self { cfg, sounding, x, trajectory, tau_max })
    }

    /// Entries of `vec(H_k)` over all pilot subcarriers.
    pub fn channel_dim(&self) -> usize {
        self.cfg.subcarriers.len() * self.cfg.n_rx * self.cfg.n_tx
    }

    /// Complex observations per interval.
    pub fn observation_dim(&self) -> usize {
        self.cfg.subcarriers.len() * self.sounding.observations()
    }

    /// `vec(H_k)` for every pilot subcarrier, stacked into one column.
    pub fn stacked_channel(&self, params: &GeometricChannelParams) -> ComplexMatrix {
        let mut out = Vec::with_capacity(self.channel_dim());
        for &k in &self.cfg.subcarriers {
            let h = geometric_channel(params, k as f64, self.cfg.f_s, self.cfg.d_over_lambda);
            out.extend_from_slice(h.vec().as_slice());
        }
        ComplexMatrix::column_vector(out)
    }
}

/// One trajectory: true parameters, stacked channels, noisy observations and
/// the noise variance of each interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSequence {
    pub params: Vec<GeometricChannelParams>,
    pub h: Vec<ComplexMatrix>,
    pub y: Vec<ComplexMatrix>,
    pub sigma2: Vec<f64>,
}

/// Draws trajectories. The SNR of an interval is measured on its noiseless
/// observation across all pilot subcarriers.
pub fn generate_sequences<R: Rng + ?Sized>(task: &ParamTask, count: usize, rng: &mut R) -> Result<Vec<ParamSequence>> {
    let c = &task.cfg;
    let n_obs = task.sounding.observations();
    (0..count)
        .map(|_| {
            let params = task.trajectory.sample_sequence(rng, c.intervals)?;
            let mut seq = ParamSequence { params: Vec::new(), h: Vec::new(), y: Vec::new(), sigma2: Vec::new() };
            for p in params {
                let mut clean = Vec::with_capacity(task.observation_dim());
                for &k in &c.subcarriers {
                    let hk = geometric_channel(&p, k as f64, c.f_s, c.d_over_lambda);
                    clean.extend_from_slice(mimo_signal(&hk, &task.sounding)?.vec().as_slice());
                }
                let clean = ComplexMatrix::column_vector(clean);
                let power = clean.frobenius_norm_sqr() / clean.rows() as f64;
                let sigma2 = noise_variance(power, c.snr_db);
                seq.y.push(add_noise(rng, &clean, sigma2));
                debug_assert_eq!(seq.y.last().map(|y| y.rows()), Some(c.subcarriers.len() * n_obs));
                seq.h.push(task.stacked_channel(&p));
                seq.sigma2.push(sigma2);
                seq.params.push(p);
            }
            Ok(seq)
        })
        .collect()
}

/// `[B, L, 2D]` network input: `[Re y; Im y]` of every interval scaled to
/// unit RMS. The scale carries no information about angles or delays, and
/// gains are recovered from the raw observation.
pub fn sequence_features(task: &ParamTask, seqs: &[ParamSequence]) -> Tensor {
    let d = task.observation_dim();
    let l = task.cfg.intervals;
    let mut data = Vec::with_capacity(seqs.len() * l * 2 * d);
    for s in seqs {
        for y in &s.y {
            let v = y.as_slice();
            let rms = (y.frobenius_norm_sqr() / (2 * d) as f64).sqrt().max(f64::MIN_POSITIVE);
            data.extend(v.iter().map(|z| z.re / rms));
            data.extend(v.iter().map(|z| z.im / rms));
        }
    }
    Tensor::new(vec![seqs.len(), l, 2 * d], data).expect("consistent sizes")
}

/// `[B, L, 5P]` regression labels for the warm-up phase.
pub fn sequence_labels(task: &ParamTask, seqs: &[ParamSequence]) -> Tensor {
    let l = task.cfg.intervals;
    let w = OUTPUTS_PER_PATH * task.cfg.paths;
    let mut data = Vec::with_capacity(seqs.len() * l * w);
    for s in seqs {
        for p in &s.params {
            for path in &p.paths {
                data.extend([path.aoa.sin(), path.aoa.cos(), path.aod.sin(), path.aod.cos(), path.delay / task.tau_max]);
            }
        }
    }
    Tensor::new(vec![seqs.len(), l, w], data).expect("consistent sizes")
}

/// `[B·L, 2·DH]` reconstruction targets `[Re h; Im h]`.
pub fn sequence_targets(task: &ParamTask, seqs: &[ParamSequence]) -> Tensor {
    let dh = task.channel_dim();
    let mut data = Vec::with_capacity(seqs.len() * task.cfg.intervals * 2 * dh);
    for s in seqs {
        for h in &s.h {
            data.extend(h.as_slice().iter().map(|z| z.re));
            data.extend(h.as_slice().iter().map(|z| z.im));
        }
    }
    Tensor::new(vec![seqs.len() * task.cfg.intervals, 2 * dh], data).expect("consistent sizes")
}

/// Decoded per-path quantities of one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry {
    /// sin θ, the receive spatial frequency.
    pub u: f64,
    /// sin φ.
    pub v: f64,
    /// Delay divided by τ_max.
    pub tau: f64,
}

fn decode_row(row: &[f64], paths: usize) -> Vec<PathGeometry> {
    (0..paths)
        .map(|i| {
            let o = &row[OUTPUTS_PER_PATH * i..OUTPUTS_PER_PATH * (i + 1)];
            PathGeometry {
                u: o[0].atan2(o[1]).sin(),
                v: o[2].atan2(o[3]).sin(),
                tau: o[4],
            }
        })
        .collect()
}

/// Noiseless observation of a unit-gain path: entry `kk·NM + r + N·m` is
/// `e^{−j2πkf_sτ}·(W^H a_R)_r·(a_T^H F S)_m`.
pub fn path_observation(task: &ParamTask, p: PathGeometry) -> Vec<C64> {
    let c = &task.cfg;
    let s = &task.sounding;
    let a_r: Vec<C64> = (0..c.n_rx).map(|r| C64::from_polar(1.0, TAU * c.d_over_lambda * p.u * r as f64)).collect();
    let a_t: Vec<C64> = (0..c.n_tx).map(|t| C64::from_polar(1.0, TAU * c.d_over_lambda * p.v * t as f64)).collect();
    let n = s.w.cols();
    let m = s.f.cols();
    let wr: Vec<C64> = (0..n).map(|j| (0..c.n_rx).map(|r| s.w[(r, j)].conj() * a_r[r]).sum()).collect();
    let tm: Vec<C64> = (0..m)
        .map(|j| (0..c.n_tx).map(|t| a_t[t].conj() * s.f[(t, j)]).sum::<C64>() * s.s[(j, j)])
        .collect();
    let mut out = Vec::with_capacity(c.subcarriers.len() * n * m);
    for &k in &c.subcarriers {
        let e = C64::from_polar(1.0, -TAU * k as f64 * c.f_s * p.tau * task.tau_max);
        for &t in &tm {
            for &w in &wr {
                out.push(e * w * t);
            }
        }
    }
    out
}

/// Least-squares path gains for fixed geometry: `argmin_α ‖y − Σ αᵢ bᵢ‖`.
/// Degenerate geometry (coincident paths) falls back to zero gains.
pub fn project_gains(task: &ParamTask, y: &ComplexMatrix, geometry: &[PathGeometry]) -> Vec<C64> {
    let atoms: Vec<Vec<C64>> = geometry.iter().map(|&p| path_observation(task, p)).collect();
    let np = atoms.len();
    let ys = y.as_slice();
    let gram = ComplexMatrix::from_fn(np, np, |i, j| atoms[i].iter().zip(&atoms[j]).map(|(a, b)| a.conj() * b).sum());
    let rhs = ComplexMatrix::from_fn(np, 1, |i, _| atoms[i].iter().zip(ys).map(|(a, b)| a.conj() * b).sum());
    let ridge = 1e-9 * gram.trace().re.max(f64::MIN_POSITIVE) / np as f64;
    match gram.add_diagonal(ridge).and_then(|g| solve_hermitian(&g, &rhs)) {
        Ok(a) if a.is_finite() => a.into_vec(),
        _ => vec![C64::new(0.0, 0.0); np],
    }
}

/// Phase constants of the reconstruction: entry `kk·N_RN_T + r + N_R·t` of
/// the stacked channel has phase `cr·sin θ + ct·sin φ + ck·τ/τ_max`.
#[derive(Debug, Clone)]
struct PhaseRows {
    cr: Tensor,
    ct: Tensor,
    ck: Tensor,
}

impl PhaseRows {
    fn new(task: &ParamTask) -> Self {
        let c = &task.cfg;
        let dh = task.channel_dim();
        let nrt = c.n_rx * c.n_tx;
        let idx = |i: usize| (i / nrt, (i % nrt) % c.n_rx, (i % nrt) / c.n_rx);
        let row = |f: &dyn Fn(usize, usize, usize) -> f64| {
            Tensor::from_fn(&[1, dh], |i| {
                let (kk, r, t) = idx(i);
                f(kk, r, t)
            })
        };
        Self {
            cr: row(&|_, r, _| TAU * c.d_over_lambda * r as f64),
            ct: row(&|_, _, t| -TAU * c.d_over_lambda * t as f64),
            ck: row(&|kk, _, _| -TAU * c.subcarriers[kk] as f64 * c.f_s * task.tau_max),
        }
    }
}

/// Reconstruction `[Re ĥ; Im ĥ]` (`[rows, 2·DH]`) from raw network outputs
/// `[rows, 5P]` and fixed gains (`rows × P`).
// `i` also picks output columns, so an iterator over `gains` does not fit
#[allow(clippy::needless_range_loop)]
fn reconstruct_in_graph(g: &mut Graph, rows: &PhaseRows, out: Var, gains: &[Vec<C64>], paths: usize) -> Result<Var> {
    let n = g.shape(out)[0];
    let dh = rows.cr.cols();
    let (cr, ct, ck) = (g.input(rows.cr.clone()), g.input(rows.ct.clone()), g.input(rows.ck.clone()));
    let mut re_acc: Option<Var> = None;
    let mut im_acc: Option<Var> = None;
    for i in 0..paths {
        let base = OUTPUTS_PER_PATH * i;
        let sa = g.slice(out, base, 1)?;
        let ca = g.slice(out, base + 1, 1)?;
        let theta = g.atan2(sa, ca)?;
        let u = g.sin(theta);
        let sd = g.slice(out, base + 2, 1)?;
        let cd = g.slice(out, base + 3, 1)?;
        let phi = g.atan2(sd, cd)?;
        let v = g.sin(phi);
        let tau = g.slice(out, base + 4, 1)?;
        let pr = g.matmul(u, cr)?;
        let pt = g.matmul(v, ct)?;
        let pk = g.matmul(tau, ck)?;
        let psi = g.add(pr, pt)?;
        let psi = g.add(psi, pk)?;
        let cos = g.cos(psi);
        let sin = g.sin(psi);
        let a = g.input(Tensor::from_fn(&[n, dh], |j| gains[j / dh][i].re));
        let b = g.input(Tensor::from_fn(&[n, dh], |j| gains[j / dh][i].im));
        let ac = g.mul(a, cos)?;
        let bs = g.mul(b, sin)?;
        let as_ = g.mul(a, sin)?;
        let bc = g.mul(b, cos)?;
        let re = g.sub(ac, bs)?;
        let im = g.add(as_, bc)?;
        re_acc = Some(match re_acc {
            Some(acc) => g.add(acc, re)?,
            None => re,
        });
        im_acc = Some(match im_acc {
            Some(acc) => g.add(acc, im)?,
            None => im,
        });
    }
    let (re, im) = (re_acc.expect("at least one path"), im_acc.expect("at least one path"));
    g.concat(&[re, im])
}

/// `(1/L) Σ_l ‖h^l − ĥ^l‖²` averaged over the sequences in the batch, with
/// the gains held fixed (projected from the current geometry).
fn reconstruction_loss(
    g: &mut Graph,
    task: &ParamTask,
    rows: &PhaseRows,
    out: Var,
    observations: &[&ComplexMatrix],
    target: Tensor,
) -> Result<Var> {
    let p = task.cfg.paths;
    let flat_out = {
        let s = g.shape(out).to_vec();
        g.reshape(out, &[s[0] * s[1], s[2]])?
    };
    let vals = g.value(flat_out).clone();
    let gains: Vec<Vec<C64>> = observations
        .iter()
        .enumerate()
        .map(|(r, y)| project_gains(task, y, &decode_row(vals.row(r), p)))
        .collect();
    let rec = reconstruct_in_graph(g, rows, flat_out, &gains, p)?;
    let t = g.input(target);
    let diff = g.sub(rec, t)?;
    let sq = g.square(diff);
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / observations.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimatorConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub warmup_lr: f64,
    /// Warm-up learning rate reached at the last warm-up epoch, decaying
    /// geometrically from `warmup_lr`. `None` keeps it constant.
    #[serde(default)]
    pub warmup_lr_final: Option<f64>,
    pub recon_epochs: usize,
    pub recon_lr: f64,
    /// Same for the reconstruction phase.
    #[serde(default)]
    pub recon_lr_final: Option<f64>,
    #[serde(default)]
    pub fresh_data: bool,
    pub seed: u64,
}

/// `2D → dense → tanh → lstm → dense → 5P`.
pub fn param_estimator_spec(task: &ParamTask, hidden: usize) -> Result<NetworkSpec> {
    NetworkSpec::new(
        2 * task.observation_dim(),
        vec![
            LayerSpec::Dense { units: hidden },
            LayerSpec::Tanh,
            LayerSpec::Lstm { hidden },
            LayerSpec::Dense { units: OUTPUTS_PER_PATH * task.cfg.paths },
        ],
    )
}

/// Loss histories of the two training phases.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamTrainHistory {
    pub warmup: Vec<f64>,
    pub recon: Vec<f64>,
}

/// Trains with the parameter-MSE warm-up, then the reconstruction loss.
/// With `fresh_data` each epoch after the first draws a new training set
/// of the same size from the task's generator.
pub fn train_param_estimator(task: &ParamTask, train: &[ParamSequence], cfg: &ParamEstimatorConfig) -> Result<(ModelState, ParamTrainHistory)> {
    if train.is_empty() {
        return Err(Error::config("no training sequences"));
    }
    let mut model = ModelState::new(param_estimator_spec(task, cfg.hidden)?, cfg.seed)?;
    let rows = PhaseRows::new(task);
    let l = task.cfg.intervals;
    let mut history = ParamTrainHistory::default();
    let mut fresh = Vec::new();
    for epoch in 0..cfg.warmup_epochs + cfg.recon_epochs {
        if cfg.fresh_data && epoch > 0 {
            fresh = generate_sequences(task, train.len(), &mut rng_for(cfg.seed, 5000 + epoch as u64))?;
        }
        let data: &[ParamSequence] = if fresh.is_empty() { train } else { &fresh };
        let x = sequence_features(task, data);
        let one = TrainConfig {
            learning_rate: decayed(cfg.warmup_lr, cfg.warmup_lr_final, epoch, cfg.warmup_epochs),
            batch_size: cfg.batch_size,
            epochs: 1,
            seed: cfg.seed.wrapping_add(epoch as u64),
            loss: LossKind::Mse,
        };
        if epoch < cfg.warmup_epochs {
            history.warmup.extend(crate::nn::fit(&mut model, &x, &sequence_labels(task, data), &one)?);
            continue;
        }
        let targets = sequence_targets(task, data);
        let recon = TrainConfig { learning_rate: decayed(cfg.recon_lr, cfg.recon_lr_final, epoch - cfg.warmup_epochs, cfg.recon_epochs), ..one };
        history.recon.extend(fit_with(&mut model, data.len(), &recon, |g, m, batch| {
            let xv = g.input(x.gather(batch));
            let out = m.forward(g, xv)?;
            let obs: Vec<&ComplexMatrix> = batch.iter().flat_map(|&b| data[b].y.iter()).collect();
            let flat: Vec<usize> = batch.iter().flat_map(|&b| (b * l)..(b + 1) * l).collect();
            reconstruction_loss(g, task, &rows, out, &obs, targets.gather(&flat))
        })?);
    }
    Ok((model, history))
}

/// Geometric interpolation from `first` at step 0 to `last` at `steps − 1`.
fn decayed(first: f64, last: Option<f64>, step: usize, steps: usize) -> f64 {
    match last {
        Some(last) if steps > 1 => first * (last / first).powf(step as f64 / (steps - 1) as f64),
        _ => first,
    }
}

/// Per-interval estimates; gains come from the closed-form projection.
/// Delays are not clamped, so a path can carry a small negative delay.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricEstimate {
    pub intervals: Vec<GeometricChannelParams>,
}

impl ParametricEstimate {
    /// `Ĥ^l[k]`.
    pub fn reconstruct(&self, task: &ParamTask, l: usize, k: usize) -> ComplexMatrix {
        geometric_channel(&self.intervals[l], k as f64, task.cfg.f_s, task.cfg.d_over_lambda)
    }
}

fn build_params(task: &ParamTask, geometry: &[PathGeometry], gains: &[C64]) -> GeometricChannelParams {
    GeometricChannelParams {
        paths: geometry
            .iter()
            .zip(gains)
            .map(|(p, &gain)| Path {
                gain,
                aoa: wrap_angle(p.u.clamp(-1.0, 1.0).asin()),
                aod: wrap_angle(p.v.clamp(-1.0, 1.0).asin()),
                delay: p.tau * task.tau_max,
            })
            .collect(),
        n_rx: task.cfg.n_rx,
        n_tx: task.cfg.n_tx,
    }
}

pub fn estimate_params(task: &ParamTask, model: &ModelState, seqs: &[ParamSequence]) -> Result<Vec<ParametricEstimate>> {
    if seqs.is_empty() {
        return Ok(Vec::new());
    }
    let out = model.predict(&sequence_features(task, seqs))?;
    let l = task.cfg.intervals;
    let w = OUTPUTS_PER_PATH * task.cfg.paths;
    Ok(seqs
        .iter()
        .enumerate()
        .map(|(b, s)| ParametricEstimate {
            intervals: (0..l)
                .map(|t| {
                    let r = b * l + t;
                    let geo = decode_row(&out.data()[r * w..(r + 1) * w], task.cfg.paths);
                    let gains = project_gains(task, &s.y[t], &geo);
                    build_params(task, &geo, &gains)
                })
                .collect(),
        })
        .collect())
}

/// Mean over intervals of `‖Ĥ − H‖²/‖H‖²` with both stacked over the pilot
/// subcarriers.
pub fn sequence_nmse(estimate: &[ComplexMatrix], seq: &ParamSequence) -> Result<f64> {
    if estimate.len() != seq.h.len() {
        return Err(Error::shape("sequence_nmse", "interval count differs"));
    }
    let mut acc = 0.0;
    for (e, h) in estimate.iter().zip(&seq.h) {
        acc += e.sub(h)?.frobenius_norm_sqr() / h.frobenius_norm_sqr();
    }
    Ok(acc / seq.h.len() as f64)
}

pub fn stacked_estimate(task: &ParamTask, est: &ParametricEstimate) -> Vec<ComplexMatrix> {
    est.intervals.iter().map(|p| task.stacked_channel(p)).collect()
}

/// Splits a stacked observation into an `N·M × K` matrix, one column per subcarrier.
fn per_subcarrier(task: &ParamTask, y: &ComplexMatrix) -> ComplexMatrix {
    let d = task.sounding.observations();
    let k = task.cfg.subcarriers.len();
    ComplexMatrix::from_fn(d, k, |i, j| y[(j * d + i, 0)])
}

/// Per-subcarrier least squares, `(X^H X)^{-1} X^H` applied once per interval.
pub fn ls_sequence(task: &ParamTask, seq: &ParamSequence) -> Result<Vec<ComplexMatrix>> {
    let xh = task.x.hermitian();
    let gram = matmul(&xh, &task.x)?;
    seq.y
        .iter()
        .map(|y| {
            let rhs = matmul(&xh, &per_subcarrier(task, y))?;
            Ok(solve_hermitian(&gram, &rhs)?.vec())
        })
        .collect()
}

/// Channel correlation `E[vec(H_k) vec(H_k)^H]` pooled over subcarriers and
/// intervals of the training trajectories.
pub fn channel_covariance(task: &ParamTask, train: &[ParamSequence]) -> Result<ComplexMatrix> {
    let per = task.cfg.n_rx * task.cfg.n_tx;
    let blocks: Vec<ComplexMatrix> = train
        .iter()
        .flat_map(|s| s.h.iter())
        .flat_map(|h| (0..task.cfg.subcarriers.len()).map(move |kk| ComplexMatrix::column_vector(h.as_slice()[kk * per..(kk + 1) * per].to_vec())))
        .collect();
    sample_covariance(blocks.iter())
}

/// Per-subcarrier LMMSE with the pooled correlation and the interval's true
/// noise variance.
pub fn lmmse_sequence(task: &ParamTask, r_hh: &ComplexMatrix, seq: &ParamSequence) -> Result<Vec<ComplexMatrix>> {
    seq.y
        .iter()
        .zip(&seq.sigma2)
        .map(|(y, &s2)| Ok(lmmse_estimate(&per_subcarrier(task, y), &task.x, r_hh, s2)?.vec()))
        .collect()
}
