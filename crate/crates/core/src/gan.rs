//! GAN channel-sample generator, first-order meta-learned initialization and
//! the downstream estimator used to judge generated data.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{tapped_delay_channel, PilotConfigFreq, TappedDelayProfile};
use crate::dl::{complex_to_real, real_to_complex, rows_to_tensor};
use crate::error::{Error, Result};
use crate::linalg::matmul;
use crate::nn::{fit, Graph, LayerSpec, LossKind, ModelState, NetworkSpec, ParamId, Tensor, TrainConfig, PROB_CLAMP};
use crate::random::{add_noise, noise_variance, standard_normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// `−E[log D(G(z))]`.
    #[default]
    NonSaturating,
    /// `E[log(1 − D(G(z)))]`, the literal min-max form.
    MinMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub data_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    #[serde(default)]
    pub generator_loss: GeneratorLoss,
}

impl GanConfig {
    pub fn new(data_dim: usize) -> Self {
        Self {
            latent_dim: 16,
            data_dim,
            generator_hidden: vec![64, 64],
            discriminator_hidden: vec![64, 64],
            generator_loss: GeneratorLoss::NonSaturating,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanState {
    pub cfg: GanConfig,
    pub generator: ModelState,
    pub discriminator: ModelState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanLosses {
    /// `−(E[log D(x)] + E[log(1 − D(G(z)))])`; the discriminator maximizes
    /// the bracket.
    pub d_loss: f64,
    pub g_loss: f64,
}

impl GanState {
    pub fn new(cfg: GanConfig, seed: u64) -> Result<Self> {
        if cfg.latent_dim == 0 || cfg.data_dim == 0 {
            return Err(Error::config("GAN dimensions must be positive"));
        }
        let g_spec = NetworkSpec::mlp(cfg.latent_dim, &cfg.generator_hidden, LayerSpec::Relu, cfg.data_dim, None)?;
        let d_spec = NetworkSpec::mlp(cfg.data_dim, &cfg.discriminator_hidden, LayerSpec::Relu, 1, Some(LayerSpec::Sigmoid))?;
        Ok(Self {
            generator: ModelState::new(g_spec, seed)?,
            discriminator: ModelState::new(d_spec, seed.wrapping_add(0x9e37_79b9))?,
            cfg,
        })
    }

    fn trainable(m: &ModelState) -> Vec<ParamId> {
        m.params().trainable_ids().collect()
    }

    /// Generator then discriminator parameters, flattened.
    pub fn theta(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for m in [&self.generator, &self.discriminator] {
            for id in Self::trainable(m) {
                out.extend_from_slice(m.params().value(id).data());
            }
        }
        out
    }

    pub fn theta_len(&self) -> usize {
        self.generator.params().num_trainable() + self.discriminator.params().num_trainable()
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta_len() {
            return Err(Error::shape("set_theta", format!("{} values for {} parameters", theta.len(), self.theta_len())));
        }
        let mut off = 0;
        for m in [&mut self.generator, &mut self.discriminator] {
            for id in Self::trainable(m) {
                let dst = m.params_mut().value_mut(id).data_mut();
                dst.copy_from_slice(&theta[off..off + dst.len()]);
                off += dst.len();
            }
        }
        Ok(())
    }

    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        self.generator.predict(z)
    }

    pub fn discriminate(&self, x: &Tensor) -> Result<Tensor> {
        self.discriminator.predict(x)
    }
}

/// `z ~ N(0, I)`, one row per sample.
pub fn sample_latent<R: Rng + ?Sized>(rng: &mut R, count: usize, latent_dim: usize) -> Tensor {
    Tensor::from_fn(&[count, latent_dim], |_| standard_normal(rng))
}

pub fn generate_samples<R: Rng + ?Sized>(state: &GanState, count: usize, rng: &mut R) -> Result<Tensor> {
    state.generate(&sample_latent(rng, count, state.cfg.latent_dim))
}

/// `E[log D(x)] + E[log(1 − D(G(z)))]` from discriminator outputs, with the
/// same probability clamp as the losses.
pub fn discriminator_objective(d_real: &Tensor, d_fake: &Tensor) -> f64 {
    let l = |p: f64| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln();
    d_real.data().iter().map(|&p| l(p)).sum::<f64>() / d_real.len() as f64
        + d_fake.data().iter().map(|&p| l(1.0 - p)).sum::<f64>() / d_fake.len() as f64
}

type Grads = Vec<(ParamId, Tensor)>;

/// Discriminator loss and gradient with `fake` held constant.
fn discriminator_grads(state: &mut GanState, real: &Tensor, fake: &Tensor) -> Result<(f64, Grads)> {
    let mut g = Graph::new();
    let d = &mut state.discriminator;
    let xr = g.input(real.clone());
    let pr = d.forward(&mut g, xr)?;
    let ones = g.input(Tensor::filled(&[real.rows(), 1], 1.0));
    let lr = g.bce(pr, ones)?;
    let xf = g.input(fake.clone());
    let pf = d.forward(&mut g, xf)?;
    let zeros = g.input(Tensor::zeros(&[fake.rows(), 1]));
    let lf = g.bce(pf, zeros)?;
    let loss = g.add(lr, lf)?;
    let grads = g.backward(loss)?;
    Ok((g.value(loss).data()[0], g.param_grads(&grads, d.params())?))
}

/// Generator loss and gradient through a frozen discriminator. The two
/// networks live in separate graphs: the first yields `∂L/∂G(z)`, which is
/// then pulled back through the generator.
fn generator_grads(state: &mut GanState, z: &Tensor) -> Result<(f64, Grads)> {
    let mut gg = Graph::new();
    let zv = gg.input(z.clone());
    let fake = state.generator.forward(&mut gg, zv)?;

    let mut gd = Graph::new();
    let fv = gd.variable(gg.value(fake).clone());
    let p = state.discriminator.forward(&mut gd, fv)?;
    let loss = match state.cfg.generator_loss {
        GeneratorLoss::NonSaturating => {
            let ones = gd.input(Tensor::filled(&[z.rows(), 1], 1.0));
            gd.bce(p, ones)?
        }
        GeneratorLoss::MinMax => {
            // log(1 − D) = −bce(D, 0)
            let zeros = gd.input(Tensor::zeros(&[z.rows(), 1]));
            let b = gd.bce(p, zeros)?;
            gd.scale(b, -1.0)
        }
    };
    let value = gd.value(loss).data()[0];
    let dfake = gd
        .backward(loss)?
        .get(fv)
        .cloned()
        .ok_or_else(|| Error::NonFinite("missing generator output gradient".into()))?;

    let up = gg.input(dfake);
    let prod = gg.mul(fake, up)?;
    let surrogate = gg.sum(prod);
    let grads = gg.backward(surrogate)?;
    Ok((value, gg.param_grads(&grads, state.generator.params())?))
}

fn apply(model: &mut ModelState, grads: &Grads, lr: f64) {
    crate::nn::sgd_step(model.params_mut(), grads, lr);
}

/// One discriminator step (generator fixed), then one generator step against
/// the updated discriminator. Losses are those before each update.
pub fn gan_step<R: Rng + ?Sized>(state: &mut GanState, real: &Tensor, learning_rate: f64, rng: &mut R) -> Result<GanLosses> {
    if real.rows() == 0 {
        return Err(Error::config("gan_step needs a nonempty real batch"));
    }
    let b = real.rows();
    let fake = state.generate(&sample_latent(rng, b, state.cfg.latent_dim))?;
    let (d_loss, dg) = discriminator_grads(state, real, &fake)?;
    apply(&mut state.discriminator, &dg, learning_rate);
    let z = sample_latent(rng, b, state.cfg.latent_dim);
    let (g_loss, gg) = generator_grads(state, &z)?;
    apply(&mut state.generator, &gg, learning_rate);
    Ok(GanLosses { d_loss, g_loss })
}

/// Both update directions evaluated at the current parameters, flattened in
/// [`GanState::theta`] order.
pub fn gan_gradient(state: &mut GanState, batch: &GanBatch) -> Result<(GanLosses, Vec<f64>)> {
    let fake = state.generate(&batch.z_d)?;
    let (d_loss, dg) = discriminator_grads(state, &batch.real, &fake)?;
    let (g_loss, gg) = generator_grads(state, &batch.z_g)?;
    let mut flat = Vec::with_capacity(state.theta_len());
    for (model, grads) in [(&state.generator, &gg), (&state.discriminator, &dg)] {
        for id in GanState::trainable(model) {
            match grads.iter().find(|(g, _)| *g == id) {
                Some((_, t)) => flat.extend_from_slice(t.data()),
                None => flat.extend(std::iter::repeat_n(0.0, model.params().value(id).len())),
            }
        }
    }
    Ok((GanLosses { d_loss, g_loss }, flat))
}

/// Real rows plus the latent draws for both players.
#[derive(Debug, Clone, PartialEq)]
pub struct GanBatch {
    pub real: Tensor,
    pub z_d: Tensor,
    pub z_g: Tensor,
}

impl GanBatch {
    pub fn sample<R: Rng + ?Sized>(data: &Tensor, batch_size: usize, latent_dim: usize, rng: &mut R) -> Result<Self> {
        let n = data.rows();
        if n == 0 {
            return Err(Error::config("cannot sample a batch from an empty dataset"));
        }
        let b = batch_size.min(n);
        let idx = sample_indices(rng, n, b).into_vec();
        Ok(Self {
            real: data.gather(&idx),
            z_d: sample_latent(rng, b, latent_dim),
            z_g: sample_latent(rng, b, latent_dim),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub inner_steps: usize,
    pub meta_iterations: usize,
    pub fine_tune_steps: usize,
    pub batch_size: usize,
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.gamma >= 0.0) || self.batch_size == 0 {
            return Err(Error::config(format!("invalid meta config {self:?}")));
        }
        Ok(())
    }
}

/// A family of tasks sharing one parameter vector.
pub trait MetaObjective {
    type Batch;
    fn sample(&mut self, task: usize) -> Result<Self::Batch>;
    fn gradient(&mut self, theta: &[f64], batch: &Self::Batch) -> Result<Vec<f64>>;
}

/// One first-order meta iteration over `tasks`:
/// `ψ_i = θ − α∇L_i(θ)` (repeated `inner_steps` times), then
/// `θ ← θ − β Σ_i ∇L_i(ψ_i)` on meta-batches drawn inside the task loop.
/// The dependence of `ψ_i` on `θ` is not differentiated.
pub fn meta_iteration<O: MetaObjective>(obj: &mut O, theta: &mut [f64], tasks: usize, alpha: f64, beta: f64, inner_steps: usize) -> Result<()> {
    let mut adapted = Vec::with_capacity(tasks);
    for i in 0..tasks {
        let mut psi = theta.to_vec();
        for _ in 0..inner_steps {
            let b = obj.sample(i)?;
            let g = obj.gradient(&psi, &b)?;
            psi.iter_mut().zip(&g).for_each(|(p, d)| *p -= alpha * d);
        }
        let meta_batch = obj.sample(i)?;
        adapted.push((psi, meta_batch));
    }
    let mut total = vec![0.0; theta.len()];
    for (psi, batch) in &adapted {
        let g = obj.gradient(psi, batch)?;
        total.iter_mut().zip(&g).for_each(|(t, d)| *t += d);
    }
    theta.iter_mut().zip(&total).for_each(|(t, d)| *t -= beta * d);
    Ok(())
}

struct GanTasks<'a, R: Rng + ?Sized> {
    state: GanState,
    datasets: &'a [Tensor],
    batch_size: usize,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> MetaObjective for GanTasks<'_, R> {
    type Batch = GanBatch;

    fn sample(&mut self, task: usize) -> Result<GanBatch> {
        GanBatch::sample(&self.datasets[task], self.batch_size, self.state.cfg.latent_dim, self.rng)
    }

    fn gradient(&mut self, theta: &[f64], batch: &GanBatch) -> Result<Vec<f64>> {
        self.state.set_theta(theta)?;
        Ok(gan_gradient(&mut self.state, batch)?.1)
    }
}

/// Meta-learned initialization from source datasets `D_1..D_M`.
pub fn meta_train<R: Rng + ?Sized>(init: &GanState, datasets: &[Tensor], cfg: &MetaConfig, rng: &mut R) -> Result<GanState> {
    cfg.validate()?;
    if datasets.is_empty() || datasets.iter().any(|d| d.rows() == 0) {
        return Err(Error::config("meta training needs at least one nonempty dataset"));
    }
    if let Some(d) = datasets.iter().find(|d| d.cols() != init.cfg.data_dim) {
        return Err(Error::shape("meta_train", format!("dataset width {} vs data dim {}", d.cols(), init.cfg.data_dim)));
    }
    let mut theta = init.theta();
    let mut tasks = GanTasks { state: init.clone(), datasets, batch_size: cfg.batch_size, rng };
    for _ in 0..cfg.meta_iterations {
        meta_iteration(&mut tasks, &mut theta, datasets.len(), cfg.alpha, cfg.beta, cfg.inner_steps)?;
    }
    let mut out = init.clone();
    out.set_theta(&theta)?;
    Ok(out)
}

/// `fine_tune_steps` alternating updates at rate γ on the target dataset.
/// Also used from a random initialization to train a vanilla GAN.
pub fn fine_tune<R: Rng + ?Sized>(init: &GanState, data: &Tensor, cfg: &MetaConfig, rng: &mut R) -> Result<(GanState, Vec<GanLosses>)> {
    if data.cols() != init.cfg.data_dim {
        return Err(Error::shape("fine_tune", format!("dataset width {} vs data dim {}", data.cols(), init.cfg.data_dim)));
    }
    let mut state = init.clone();
    let mut history = Vec::with_capacity(cfg.fine_tune_steps);
    for _ in 0..cfg.fine_tune_steps {
        let b = GanBatch::sample(data, cfg.batch_size, state.cfg.latent_dim, rng)?;
        history.push(gan_step(&mut state, &b.real, cfg.gamma, rng)?);
    }
    Ok((state, history))
}

/// Trailing moving average with window `w`.
pub fn smoothed(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Channel family and downstream estimator

/// Tapped-delay channels from one profile at one sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapFamily {
    pub profile: TappedDelayProfile,
    pub sample_rate: f64,
    pub taps: usize,
}

impl TapFamily {
    /// The EVA profile at `sample_rate`; different rates spread the same
    /// delays over different tap positions.
    pub fn eva(sample_rate: f64, taps: usize) -> Self {
        Self { profile: TappedDelayProfile::eva(), sample_rate, taps }
    }

    /// Real-decomposed channels `[count, 2·taps]`.
    pub fn samples<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = (0..count)
            .map(|_| Ok(complex_to_real(&tapped_delay_channel(&self.profile, self.sample_rate, self.taps, rng)?.0)))
            .collect::<Result<_>>()?;
        rows_to_tensor(&rows)
    }
}

/// Pilot observations of tap vectors, shared by every estimator being compared.
#[derive(Debug, Clone, PartialEq)]
pub struct DownstreamTask {
    pub pilots: PilotConfigFreq,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamConfig {
    pub pilots: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl DownstreamTask {
    pub fn new<R: Rng + ?Sized>(taps: usize, pilots: usize, snr_db: f64, rng: &mut R) -> Result<Self> {
        Ok(Self { pilots: PilotConfigFreq::random(rng, taps, pilots, taps)?, snr_db })
    }

    /// Noisy pilot observations `[count, 2m]` of real-decomposed channels.
    /// Noise power assumes unit average channel energy.
    pub fn observe<R: Rng + ?Sized>(&self, channels: &Tensor, rng: &mut R) -> Result<Tensor> {
        let p = self.pilots.measurement_matrix();
        if channels.cols() != 2 * p.cols() {
            return Err(Error::shape("observe", format!("{} columns for {} taps", channels.cols(), p.cols())));
        }
        let sigma2 = noise_variance(1.0, self.snr_db);
        let rows: Vec<Vec<f64>> = (0..channels.rows())
            .map(|r| Ok(complex_to_real(&add_noise(rng, &matmul(&p, &real_to_complex(channels.row(r)))?, sigma2))))
            .collect::<Result<_>>()?;
        rows_to_tensor(&rows)
    }
}

/// `2m → hidden → 2n` regression trained with MSE on observations of
/// `channels`.
pub fn train_downstream<R: Rng + ?Sized>(task: &DownstreamTask, channels: &Tensor, cfg: &DownstreamConfig, rng: &mut R) -> Result<ModelState> {
    let y = task.observe(channels, rng)?;
    let spec = NetworkSpec::mlp(y.cols(), &cfg.hidden, LayerSpec::Relu, channels.cols(), None)?;
    let mut model = ModelState::new(spec, cfg.train.seed)?;
    fit(&mut model, &y, channels, &TrainConfig { loss: LossKind::Mse, ..cfg.train })?;
    Ok(model)
}

/// Per-tap MSE `‖ĥ − h‖²/n`, averaged over samples.
pub fn downstream_mse(model: &ModelState, observations: &Tensor, channels: &Tensor) -> Result<f64> {
    let pred = model.predict(observations)?;
    let taps = channels.cols() / 2;
    Ok(pred.data().iter().zip(channels.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (channels.rows() * taps) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReport {
    pub mse_real: f64,
    pub mse_gan: f64,
}

/// Trains identical estimators on real and on generated channels and tests
/// both on the same held-out real observations.
pub fn evaluate_downstream<R: Rng + ?Sized>(
    task: &DownstreamTask,
    real: &Tensor,
    generated: &Tensor,
    test: &Tensor,
    cfg: &DownstreamConfig,
    rng: &mut R,
) -> Result<DownstreamReport> {
    let test_y = task.observe(test, rng)?;
    let m_real = train_downstream(task, real, cfg, rng)?;
    let m_gan = train_downstream(task, generated, cfg, rng)?;
    Ok(DownstreamReport {
        mse_real: downstream_mse(&m_real, &test_y, test)?,
        mse_gan: downstream_mse(&m_gan, &test_y, test)?,
    })
}
