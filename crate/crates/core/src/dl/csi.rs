//! CSI feedback autoencoder: the user side encodes a channel estimate into
//! `N_l` reals and the base station decodes it back.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::labeled::{complex_to_real, rows_to_tensor};
use crate::channel::{geometric_channel, sample_geometry, GeometryScenario, DEFAULT_D_OVER_LAMBDA};
use crate::error::{Error, Result};
use crate::nn::{fit_with, LayerSpec, ModelState, NetworkSpec, Tensor, TrainConfig};
use crate::random::{add_noise, noise_variance};

/// Encoder and decoder held as one layer stack; layers before `split` form
/// the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiCodecState {
    pub model: ModelState,
    pub split: usize,
    pub latent_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiCodecConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub latent_dim: usize,
    /// Hidden widths of the encoder; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl CsiCodecConfig {
    pub fn input_dim(&self) -> usize {
        2 * self.n_t * self.n_r
    }

    /// A latent at least as wide as the input does not compress.
    pub fn is_compressive(&self) -> bool {
        self.latent_dim < self.input_dim()
    }
}

/// `[dense, bn, relu]* → N_l` then the mirror image back to `2·N_t·N_r`.
/// With no hidden layers both halves are single linear maps.
pub fn csi_codec_spec(cfg: &CsiCodecConfig) -> Result<(NetworkSpec, usize)> {
    if cfg.latent_dim == 0 || cfg.n_t == 0 || cfg.n_r == 0 {
        return Err(Error::config("CSI codec sizes must be positive"));
    }
    let block = |w: usize| [LayerSpec::Dense { units: w }, LayerSpec::BatchNorm, LayerSpec::Relu];
    let mut layers: Vec<LayerSpec> = cfg.hidden.iter().flat_map(|&w| block(w)).collect();
    layers.push(LayerSpec::Dense { units: cfg.latent_dim });
    let split = layers.len();
    layers.extend(cfg.hidden.iter().rev().flat_map(|&w| block(w)));
    layers.push(LayerSpec::Dense { units: cfg.input_dim() });
    Ok((NetworkSpec::new(cfg.input_dim(), layers)?, split))
}

impl CsiCodecState {
    pub fn new(cfg: &CsiCodecConfig, seed: u64) -> Result<Self> {
        let (spec, split) = csi_codec_spec(cfg)?;
        Ok(Self {
            model: ModelState::new(spec, seed)?,
            split,
            latent_dim: cfg.latent_dim,
        })
    }

    /// `p = f_e(ĥ)`, `[batch, N_l]`.
    pub fn encode(&self, h: &Tensor) -> Result<Tensor> {
        self.model.predict_span(h, 0..self.split)
    }

    /// `ĥ_rec = f_d(p)`.
    pub fn decode(&self, p: &Tensor) -> Result<Tensor> {
        self.model.predict_span(p, self.split..self.model.spec().layers.len())
    }

    pub fn reconstruct(&self, h: &Tensor) -> Result<Tensor> {
        self.model.predict(h)
    }
}

/// `(1/√(N_tN_r))·‖ĥ − ĥ_rec‖²` averaged over rows.
pub fn csi_loss(h: &Tensor, rec: &Tensor, n_t: usize, n_r: usize) -> f64 {
    let rows = h.rows() as f64;
    let sq: f64 = h.data().iter().zip(rec.data()).map(|(a, b)| (a - b).powi(2)).sum();
    sq / ((n_t * n_r) as f64).sqrt() / rows
}

/// Mean squared error per real entry.
pub fn csi_mse(h: &Tensor, rec: &Tensor) -> f64 {
    h.data().iter().zip(rec.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / h.len() as f64
}

/// Trains encoder and decoder jointly on the codec loss. Returns per-epoch loss.
pub fn train_csi_autoencoder(channels: &Tensor, cfg: &CsiCodecConfig) -> Result<(CsiCodecState, Vec<f64>)> {
    if channels.cols() != cfg.input_dim() {
        return Err(Error::shape("train_csi_autoencoder", format!("channels have {} columns, codec expects {}", channels.cols(), cfg.input_dim())));
    }
    let mut codec = CsiCodecState::new(cfg, cfg.train.seed)?;
    let scale = 1.0 / ((cfg.n_t * cfg.n_r) as f64).sqrt();
    let history = fit_with(&mut codec.model, channels.shape()[0], &cfg.train, |g, m, batch| {
        let x = channels.gather(batch);
        let xv = g.input(x.clone());
        let rec = m.forward(g, xv)?;
        let t = g.input(x);
        let d = g.sub(rec, t)?;
        let sq = g.square(d);
        let total = g.sum(sq);
        Ok(g.scale(total, scale / batch.len() as f64))
    })?;
    Ok((codec, history))
}

/// Noisy channel estimates `ĥ = h + n` of random sparse geometric channels
/// at subcarrier 0, real-decomposed into `[batch, 2·N_t·N_r]`. Each channel
/// is scaled to `‖h‖² = N_t·N_r` before noise is added at `snr_db`.
pub fn csi_channels<R: Rng + ?Sized>(n_t: usize, n_r: usize, paths: usize, count: usize, snr_db: f64, rng: &mut R) -> Result<Tensor> {
    let scenario = GeometryScenario::new(n_r, n_t, paths);
    let rows: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let p = sample_geometry(rng, &scenario)?;
            let h = geometric_channel(&p, 0.0, 1.0, DEFAULT_D_OVER_LAMBDA).vec();
            let norm = (h.frobenius_norm_sqr() / (n_t * n_r) as f64).sqrt().max(f64::MIN_POSITIVE);
            let h = h.scale_real(1.0 / norm);
            Ok(complex_to_real(&add_noise(rng, &h, noise_variance(1.0, snr_db))))
        })
        .collect::<Result<_>>()?;
    rows_to_tensor(&rows)
}
