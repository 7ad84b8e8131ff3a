use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::random::{rng_for, SimRng};

/// Running statistics decay: `run ← m·run + (1 − m)·batch`.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize },
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    BatchNorm,
    LayerNorm,
    Dropout { rate: f64 },
    Lstm { hidden: usize },
}

impl LayerSpec {
    fn is_activation(&self) -> bool {
        matches!(self, LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Sigmoid | LayerSpec::Softmax)
    }

    fn is_weighted(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Lstm { .. })
    }
}

/// Layer stack acting on the last axis. An `lstm` layer expects a
/// `[batch, time, features]` input and returns the hidden state at every
/// step; every other layer accepts any number of leading axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Spec whose output dimension is inferred from the layers.
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut dim = input_dim;
        for l in &layers {
            match l {
                LayerSpec::Dense { units } => dim = *units,
                LayerSpec::Lstm { hidden } => dim = *hidden,
                _ => {}
            }
        }
        let spec = Self {
            input_dim,
            output_dim: dim,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Dense stack: `hidden` widths each followed by `activation`, then a
    /// dense output layer with an optional output activation.
    pub fn mlp(input_dim: usize, hidden: &[usize], activation: LayerSpec, output_dim: usize, output: Option<LayerSpec>) -> Result<Self> {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerSpec::Dense { units: h });
            layers.push(activation);
        }
        layers.push(LayerSpec::Dense { units: output_dim });
        layers.extend(output);
        Self::new(input_dim, layers)
    }

    /// Feature width entering layer `index`.
    pub fn width_before(&self, index: usize) -> usize {
        let mut dim = self.input_dim;
        for l in &self.layers[..index] {
            match *l {
                LayerSpec::Dense { units } | LayerSpec::Lstm { hidden: units } => dim = units,
                _ => {}
            }
        }
        dim
    }

    /// Checks dimensions, dropout rates and the output-activation rule: after
    /// the last weighted layer there is at most one activation and nothing
    /// else. No activation means an identity output.
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.layers.is_empty() {
            return Err(Error::config("network needs a positive input size and at least one layer"));
        }
        let mut dim = self.input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            match *l {
                LayerSpec::Dense { units } | LayerSpec::Lstm { hidden: units } => {
                    if units == 0 {
                        return Err(Error::config(format!("layer {i} has zero width")));
                    }
                    dim = units;
                }
                LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                    return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
                }
                _ => {}
            }
        }
        if dim != self.output_dim {
            return Err(Error::config(format!("layers produce {dim} outputs, spec says {}", self.output_dim)));
        }
        let last_weighted = self
            .layers
            .iter()
            .rposition(LayerSpec::is_weighted)
            .ok_or_else(|| Error::config("network has no dense or lstm layer"))?;
        let tail = &self.layers[last_weighted + 1..];
        if tail.len() > 1 || tail.iter().any(|l| !l.is_activation()) {
            return Err(Error::config(format!(
                "expected a single output activation after the last weighted layer, found {tail:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LayerParams {
    None,
    Dense { w: ParamId, b: ParamId },
    Norm { gamma: ParamId, beta: ParamId },
    BatchNorm { gamma: ParamId, beta: ParamId, mean: ParamId, var: ParamId },
    Lstm { w_x: ParamId, w_h: ParamId, b: ParamId },
}

/// Trainable network: spec, parameters, mode and dropout RNG.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    spec: NetworkSpec,
    params: ParamStore,
    layers: Vec<LayerParams>,
    training: bool,
    rng: SimRng,
}

/// Glorot-uniform `[fan_in, fan_out]` matrix.
pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(&[fan_in, fan_out], |_| rng.random_range(-a..a))
}

impl ModelState {
    /// Fresh model: Glorot-uniform weights, zero biases, unit scales. Starts
    /// in training mode.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = rng_for(seed, 0);
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut dim = spec.input_dim;
        for (i, l) in spec.layers.iter().enumerate() {
            let p = |s: &str| format!("layer{i}.{s}");
            let lp = match *l {
                LayerSpec::Dense { units } => {
                    let w = params.add(p("weight"), glorot(&mut init, dim, units));
                    let b = params.add(p("bias"), Tensor::zeros(&[units]));
                    dim = units;
                    LayerParams::Dense { w, b }
                }
                LayerSpec::Lstm { hidden } => {
                    let w_x = params.add(p("w_x"), glorot(&mut init, dim, 4 * hidden));
                    let w_h = params.add(p("w_h"), glorot(&mut init, hidden, 4 * hidden));
                    let b = params.add(p("bias"), Tensor::zeros(&[4 * hidden]));
                    dim = hidden;
                    LayerParams::Lstm { w_x, w_h, b }
                }
                LayerSpec::BatchNorm => LayerParams::BatchNorm {
                    gamma: params.add(p("gamma"), Tensor::filled(&[dim], 1.0)),
                    beta: params.add(p("beta"), Tensor::zeros(&[dim])),
                    mean: params.add_buffer(p("running_mean"), Tensor::zeros(&[dim])),
                    var: params.add_buffer(p("running_var"), Tensor::filled(&[dim], 1.0)),
                },
                LayerSpec::LayerNorm => LayerParams::Norm {
                    gamma: params.add(p("gamma"), Tensor::filled(&[dim], 1.0)),
                    beta: params.add(p("beta"), Tensor::zeros(&[dim])),
                },
                _ => LayerParams::None,
            };
            layers.push(lp);
        }
        Ok(Self {
            spec,
            params,
            layers,
            training: true,
            rng: rng_for(seed, 1),
        })
    }

    /// Rebuilds a model from stored parameters, matching them by name.
    pub fn from_params(spec: NetworkSpec, stored: ParamStore, seed: u64) -> Result<Self> {
        let mut model = Self::new(spec, seed)?;
        if stored.len() != model.params.len() {
            return Err(Error::config(format!(
                "checkpoint has {} tensors, spec needs {}",
                stored.len(),
                model.params.len()
            )));
        }
        for id in stored.ids() {
            let target = model
                .params
                .find(stored.name(id))
                .ok_or_else(|| Error::config(format!("unexpected tensor `{}`", stored.name(id))))?;
            model.params.set(target, stored.value(id).clone())?;
        }
        model.training = false;
        Ok(model)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    /// Current dropout RNG state, for reproducing masks.
    pub fn rng(&self) -> &SimRng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: SimRng) {
        self.rng = rng;
    }

    /// Parameter id of layer `layer`'s tensor `name` (e.g. `weight`).
    pub fn param_id(&self, layer: usize, name: &str) -> Option<ParamId> {
        self.params.find(&format!("layer{layer}.{name}"))
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let want_seq = matches!(self.spec.layers.iter().find(|l| l.is_weighted()), Some(LayerSpec::Lstm { .. }));
        let ok = shape.last() == Some(&self.spec.input_dim) && (!want_seq || shape.len() == 3);
        if !ok {
            return Err(Error::shape(
                "forward",
                format!("input {shape:?} for a network with input size {}", self.spec.input_dim),
            ));
        }
        Ok(())
    }

    /// Appends the network to `g`. In training mode dropout masks are drawn
    /// from the model RNG and batch-norm running statistics are updated.
    pub fn forward(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        self.check_input(g.shape(x))?;
        let training = self.training;
        let mut rng = self.rng.clone();
        let mut updates = Vec::new();
        let out = self.apply(g, x, training.then_some(&mut rng), &mut updates)?;
        self.rng = rng;
        for (id, v) in updates {
            self.params.set(id, v)?;
        }
        Ok(out)
    }

    /// Inference-mode output for a plain tensor.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.shape())?;
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let out = self.apply(&mut g, xv, None, &mut Vec::new())?;
        Ok(g.value(out).clone())
    }

    /// Forward pass through `layers[span]` only, e.g. the encoder half of
    /// an autoencoder. Same mode semantics as [`ModelState::forward`].
    pub fn forward_span(&mut self, g: &mut Graph, x: Var, span: Range<usize>) -> Result<Var> {
        self.check_span_input(g.shape(x), &span)?;
        let training = self.training;
        let mut rng = self.rng.clone();
        let mut updates = Vec::new();
        let out = self.apply_span(g, x, span, training.then_some(&mut rng), &mut updates)?;
        self.rng = rng;
        for (id, v) in updates {
            self.params.set(id, v)?;
        }
        Ok(out)
    }

    /// Inference-mode output of `layers[span]`.
    pub fn predict_span(&self, x: &Tensor, span: Range<usize>) -> Result<Tensor> {
        self.check_span_input(x.shape(), &span)?;
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let out = self.apply_span(&mut g, xv, span, None, &mut Vec::new())?;
        Ok(g.value(out).clone())
    }

    fn check_span_input(&self, shape: &[usize], span: &Range<usize>) -> Result<()> {
        if span.start > span.end || span.end > self.spec.layers.len() {
            return Err(Error::config(format!("layer span {span:?} of {} layers", self.spec.layers.len())));
        }
        if span.start == 0 {
            return self.check_input(shape);
        }
        let want = self.spec.width_before(span.start);
        if shape.last() != Some(&want) {
            return Err(Error::shape("forward_span", format!("input {shape:?}, layer {} expects width {want}", span.start)));
        }
        Ok(())
    }

    fn apply(&self, g: &mut Graph, x: Var, rng: Option<&mut SimRng>, updates: &mut Vec<(ParamId, Tensor)>) -> Result<Var> {
        self.apply_span(g, x, 0..self.spec.layers.len(), rng, updates)
    }

    fn apply_span(
        &self,
        g: &mut Graph,
        x: Var,
        span: Range<usize>,
        mut rng: Option<&mut SimRng>,
        updates: &mut Vec<(ParamId, Tensor)>,
    ) -> Result<Var> {
        let mut h = x;
        for (spec, lp) in self.spec.layers[span.clone()].iter().zip(&self.layers[span]) {
            h = match (spec, lp) {
                (LayerSpec::Dense { .. }, LayerParams::Dense { w, b }) => {
                    let (w, b) = (g.param(&self.params, *w), g.param(&self.params, *b));
                    g.linear(h, w, b)?
                }
                (LayerSpec::Relu, _) => g.relu(h),
                (LayerSpec::Tanh, _) => g.tanh(h),
                (LayerSpec::Sigmoid, _) => g.sigmoid(h),
                (LayerSpec::Softmax, _) => g.softmax(h),
                (LayerSpec::BatchNorm, LayerParams::BatchNorm { gamma, beta, mean, var }) => {
                    let (gm, bt) = (g.param(&self.params, *gamma), g.param(&self.params, *beta));
                    if rng.is_some() {
                        let (y, bm, bv) = g.batch_norm(h, gm, bt)?;
                        let blend = |run: &Tensor, batch: &[f64]| {
                            Tensor::from_fn(run.shape(), |j| BN_MOMENTUM * run.data()[j] + (1.0 - BN_MOMENTUM) * batch[j])
                        };
                        updates.push((*mean, blend(self.params.value(*mean), &bm)));
                        updates.push((*var, blend(self.params.value(*var), &bv)));
                        y
                    } else {
                        let (m, v) = (self.params.value(*mean).data(), self.params.value(*var).data());
                        g.batch_norm_fixed(h, gm, bt, m, v)?
                    }
                }
                (LayerSpec::LayerNorm, LayerParams::Norm { gamma, beta }) => {
                    let (gm, bt) = (g.param(&self.params, *gamma), g.param(&self.params, *beta));
                    g.layer_norm(h, gm, bt)?
                }
                (LayerSpec::Dropout { rate }, _) => match rng.as_deref_mut() {
                    Some(r) if *rate > 0.0 => {
                        let mask = dropout_mask(r, g.shape(h), *rate);
                        let m = g.input(mask);
                        g.mul(h, m)?
                    }
                    _ => h,
                },
                (LayerSpec::Lstm { hidden }, LayerParams::Lstm { w_x, w_h, b }) => {
                    let cell = LstmCell {
                        w_x: g.param(&self.params, *w_x),
                        w_h: g.param(&self.params, *w_h),
                        b: g.param(&self.params, *b),
                        hidden: *hidden,
                    };
                    lstm_sequence(g, &cell, h)?
                }
                _ => unreachable!("layer parameters follow the spec"),
            };
        }
        Ok(h)
    }
}

/// Inverted-dropout mask: zero with probability `rate`, otherwise `1/(1−rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], rate: f64) -> Tensor {
    let keep = 1.0 / (1.0 - rate);
    Tensor::from_fn(shape, |_| if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Applies inverted dropout to a plain tensor.
pub fn dropout_apply<R: Rng + ?Sized>(x: &Tensor, rate: f64, rng: &mut R) -> Tensor {
    if rate == 0.0 {
        return x.clone();
    }
    x.zip_map(&dropout_mask(rng, x.shape(), rate), |a, m| a * m)
}

/// LSTM weights as graph nodes. Gate blocks in `w_x`, `w_h` and `b` are
/// ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
    pub hidden: usize,
}

fn lstm_gates(g: &mut Graph, pre: Var, c_prev: Option<Var>, hidden: usize) -> Result<(Var, Var)> {
    let i = g.slice(pre, 0, hidden)?;
    let i = g.sigmoid(i);
    let cand = g.slice(pre, 2 * hidden, hidden)?;
    let cand = g.tanh(cand);
    let o = g.slice(pre, 3 * hidden, hidden)?;
    let o = g.sigmoid(o);
    let written = g.mul(i, cand)?;
    let c = match c_prev {
        Some(c_prev) => {
            let f = g.slice(pre, hidden, hidden)?;
            let f = g.sigmoid(f);
            let kept = g.mul(f, c_prev)?;
            g.add(kept, written)?
        }
        None => written,
    };
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// One recurrence step: `[i f ĉ o] = x W_x + h W_h + b`, `c = f⊙c₋ + i⊙ĉ`,
/// `h = o⊙tanh(c)`.
pub fn lstm_step(g: &mut Graph, cell: &LstmCell, x_t: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    let xw = g.linear(x_t, cell.w_x, cell.b)?;
    let hw = g.matmul(h_prev, cell.w_h)?;
    let pre = g.add(xw, hw)?;
    lstm_gates(g, pre, Some(c_prev), cell.hidden)
}

/// Runs the cell over `[B, T, F]` from a zero state and returns `[B, T, H]`.
pub fn lstm_sequence(g: &mut Graph, cell: &LstmCell, x: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 {
        return Err(Error::shape("lstm", format!("expected [batch, time, features], got {shape:?}")));
    }
    // input projection for all steps at once
    let xw = g.linear(x, cell.w_x, cell.b)?;
    let mut state: Option<(Var, Var)> = None;
    let mut outputs = Vec::with_capacity(shape[1]);
    for t in 0..shape[1] {
        let xt = g.time_slice(xw, t)?;
        let (h, c) = match state {
            None => lstm_gates(g, xt, None, cell.hidden)?,
            Some((h_prev, c_prev)) => {
                let hw = g.matmul(h_prev, cell.w_h)?;
                let pre = g.add(xt, hw)?;
                lstm_gates(g, pre, Some(c_prev), cell.hidden)?
            }
        };
        outputs.push(h);
        state = Some((h, c));
    }
    g.stack_time(&outputs)
}

/// Mean of the members' inference outputs.
pub fn ensemble_average(models: &[ModelState], x: &Tensor) -> Result<Tensor> {
    let (first, rest) = models.split_first().ok_or_else(|| Error::config("empty ensemble"))?;
    let mut acc = first.predict(x)?;
    for m in rest {
        let y = m.predict(x)?;
        if y.shape() != acc.shape() {
            return Err(Error::shape("ensemble_average", format!("{:?} vs {:?}", y.shape(), acc.shape())));
        }
        acc.add_assign(&y);
    }
    let n = models.len() as f64;
    Ok(acc.map(|v| v / n))
}
