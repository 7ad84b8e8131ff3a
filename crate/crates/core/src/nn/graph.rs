//! Reverse-mode differentiation tape.
//!
//! A [`Graph`] records every operation as it is evaluated. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and
//! accumulates gradients for every node that depends on a parameter.

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Probabilities entering a log are clamped into `[ε, 1 − ε]`.
pub const PROB_CLAMP: f64 = 1e-12;

pub(crate) const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Sin(Var),
    Cos(Var),
    Square(Var),
    Atan2(Var, Var),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    Slice { x: Var, start: usize },
    Concat(Vec<Var>),
    TimeSlice { x: Var, t: usize },
    StackTime(Vec<Var>),
    Reshape(Var),
    /// Per-feature standardization over all rows, then `γ·x̂ + β`.
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor, inv_std: Vec<f64> },
    /// Per-row standardization over the last axis, then `γ·x̂ + β`.
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor, inv_std: Vec<f64> },
    /// `γ·(x − μ)/σ + β` with fixed statistics.
    Affine { x: Var, gamma: Var, beta: Var, shift: Vec<f64>, inv_std: Vec<f64> },
    Mse(Var, Var),
    Mae(Var, Var),
    Bce(Var, Var),
    Ce(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param => true,
            _ => inputs.iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, &[])
    }

    /// Differentiable leaf bound to a stored parameter. Repeated calls with
    /// the same id return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&(_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, &[]);
        self.params.push((id, v));
        v
    }

    /// Differentiable leaf that is not backed by a store; used by gradient
    /// checks on raw inputs.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// `x·W` with `x` of shape `[.., k]` and `W` of shape `[k, n]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape().len() != 2 || xv.cols() != wv.shape()[0] {
            return Err(Error::shape("matmul", format!("{:?} · {:?}", xv.shape(), wv.shape())));
        }
        let (m, k, n) = (xv.rows(), xv.cols(), wv.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, xv.data(), false, wv.data(), false, 0.0, &mut out);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("non-empty") = n;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::MatMul(x, w), &[x, w]))
    }

    /// Adds a `[n]` bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.len() != xv.cols() {
            return Err(Error::shape("add_bias", format!("{:?} + {:?}", xv.shape(), bv.shape())));
        }
        let n = xv.cols();
        let mut t = xv.clone();
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v += bv.data()[i % n];
        }
        Ok(self.push(t, Op::AddBias(x, b), &[x, b]))
    }

    /// `x·W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x * s);
        self.push(t, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x + s);
        self.push(t, Op::AddScalar(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.max(0.0));
        self.push(t, Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        self.push(t, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(t, Op::Sigmoid(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::exp);
        self.push(t, Op::Exp(a), &[a])
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::sin);
        self.push(t, Op::Sin(a), &[a])
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::cos);
        self.push(t, Op::Cos(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * x);
        self.push(t, Op::Square(a), &[a])
    }

    /// Elementwise `atan2(y, x)`.
    pub fn atan2(&mut self, y: Var, x: Var) -> Result<Var> {
        same_shape("atan2", self.value(y), self.value(x))?;
        let t = self.value(y).zip_map(self.value(x), f64::atan2);
        Ok(self.push(t, Op::Atan2(y, x), &[y, x]))
    }

    /// Softmax along the last axis, max-shifted for stability.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = v.cols();
        let mut t = v.clone();
        for row in t.data_mut().chunks_mut(n) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        self.push(t, Op::Softmax(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(t, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).mean());
        self.push(t, Op::Mean(a), &[a])
    }

    /// Sums the last axis, keeping it with size one.
    pub fn sum_last(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data: Vec<f64> = (0..v.rows()).map(|r| v.row(r).iter().sum()).collect();
        let mut shape = v.shape().to_vec();
        *shape.last_mut().expect("non-empty") = 1;
        let t = Tensor::new(shape, data).expect("consistent shape");
        self.push(t, Op::SumLast(a), &[a])
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a);
        let n = v.cols();
        if len == 0 || start + len > n {
            return Err(Error::shape("slice", format!("{start}..{} of {n}", start + len)));
        }
        let mut data = Vec::with_capacity(v.rows() * len);
        for r in 0..v.rows() {
            data.extend_from_slice(&v.row(r)[start..start + len]);
        }
        let mut shape = v.shape().to_vec();
        *shape.last_mut().expect("non-empty") = len;
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::Slice { x: a, start }, &[a]))
    }

    /// Concatenates along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let rows = self.value(*first).rows();
        let lead = self.value(*first).shape()[..self.value(*first).shape().len() - 1].to_vec();
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat", format!("{:?} vs leading {:?}", s, lead)));
            }
            total += self.value(p).cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::Concat(parts.to_vec()), parts))
    }

    /// Step `t` of a `[B, T, F]` sequence, as `[B, F]`.
    pub fn time_slice(&mut self, a: Var, t: usize) -> Result<Var> {
        let v = self.value(a);
        let s = v.shape();
        if s.len() != 3 || t >= s[1] {
            return Err(Error::shape("time_slice", format!("step {t} of {s:?}")));
        }
        let (b, steps, f) = (s[0], s[1], s[2]);
        let mut data = Vec::with_capacity(b * f);
        for i in 0..b {
            let off = (i * steps + t) * f;
            data.extend_from_slice(&v.data()[off..off + f]);
        }
        let out = Tensor::new(vec![b, f], data)?;
        Ok(self.push(out, Op::TimeSlice { x: a, t }, &[a]))
    }

    /// Stacks `T` tensors of shape `[B, F]` into `[B, T, F]`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        let first = steps.first().ok_or_else(|| Error::shape("stack_time", "no steps"))?;
        let s0 = self.value(*first).shape().to_vec();
        if s0.len() != 2 {
            return Err(Error::shape("stack_time", format!("step shape {s0:?}")));
        }
        for &p in steps {
            same_shape("stack_time", self.value(*first), self.value(p))?;
        }
        let (b, f, t) = (s0[0], s0[1], steps.len());
        let mut data = vec![0.0; b * t * f];
        for (k, &p) in steps.iter().enumerate() {
            let v = self.value(p);
            for i in 0..b {
                let off = (i * t + k) * f;
                data[off..off + f].copy_from_slice(v.row(i));
            }
        }
        let out = Tensor::new(vec![b, t, f], data)?;
        Ok(self.push(out, Op::StackTime(steps.to_vec()), steps))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshape(shape)?;
        Ok(self.push(t, Op::Reshape(a), &[a]))
    }

    fn check_norm_params(&self, op: &'static str, x: Var, gamma: Var, beta: Var) -> Result<()> {
        let n = self.value(x).cols();
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(Error::shape(op, format!("{n} features, scale/shift of {} / {}", self.value(gamma).len(), self.value(beta).len())));
        }
        Ok(())
    }

    /// Batch normalization with batch statistics. Returns the output node and
    /// the per-feature batch mean and (biased) variance.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        self.check_norm_params("batch_norm", x, gamma, beta)?;
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        if m < 2 {
            return Err(Error::shape("batch_norm", "training-mode batch norm needs at least two rows"));
        }
        let mut mean = vec![0.0; n];
        for r in 0..m {
            for (j, v) in xv.row(r).iter().enumerate() {
                mean[j] += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        let mut var = vec![0.0; n];
        for r in 0..m {
            for (j, v) in xv.row(r).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= m as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let mut xhat = xv.clone();
        for (i, v) in xhat.data_mut().iter_mut().enumerate() {
            let j = i % n;
            *v = (*v - mean[j]) * inv_std[j];
        }
        let out = self.scale_shift(&xhat, gamma, beta);
        let node = self.push(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta]);
        Ok((node, mean, var))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_fixed(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64]) -> Result<Var> {
        self.check_norm_params("batch_norm_fixed", x, gamma, beta)?;
        let n = self.value(x).cols();
        if mean.len() != n || var.len() != n {
            return Err(Error::shape("batch_norm_fixed", "statistics length"));
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let mut xhat = self.value(x).clone();
        for (i, v) in xhat.data_mut().iter_mut().enumerate() {
            let j = i % n;
            *v = (*v - mean[j]) * inv_std[j];
        }
        let out = self.scale_shift(&xhat, gamma, beta);
        let op = Op::Affine {
            x,
            gamma,
            beta,
            shift: mean.to_vec(),
            inv_std,
        };
        Ok(self.push(out, op, &[x, gamma, beta]))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        self.check_norm_params("layer_norm", x, gamma, beta)?;
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(m);
        for row in xhat.data_mut().chunks_mut(n) {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mu) * is;
            }
            inv_std.push(is);
        }
        let out = self.scale_shift(&xhat, gamma, beta);
        Ok(self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta]))
    }

    fn scale_shift(&self, xhat: &Tensor, gamma: Var, beta: Var) -> Tensor {
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let n = xhat.cols();
        let mut out = xhat.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v * g[i % n] + b[i % n];
        }
        out
    }

    /// Mean of `(p − t)²` over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape("mse", self.value(pred), self.value(target))?;
        let v = self.value(pred).zip_map(self.value(target), |p, t| (p - t).powi(2)).mean();
        Ok(self.push(Tensor::scalar(v), Op::Mse(pred, target), &[pred, target]))
    }

    /// Mean of `|p − t|` over all elements.
    pub fn mae(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape("mae", self.value(pred), self.value(target))?;
        let v = self.value(pred).zip_map(self.value(target), |p, t| (p - t).abs()).mean();
        Ok(self.push(Tensor::scalar(v), Op::Mae(pred, target), &[pred, target]))
    }

    /// Binary cross-entropy averaged over all elements; `pred` holds probabilities.
    pub fn bce(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape("bce", self.value(pred), self.value(target))?;
        let v = self
            .value(pred)
            .zip_map(self.value(target), |p, t| {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .mean();
        Ok(self.push(Tensor::scalar(v), Op::Bce(pred, target), &[pred, target]))
    }

    /// Categorical cross-entropy `−Σ t log p` over the last axis, averaged over rows.
    pub fn ce(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape("ce", self.value(pred), self.value(target))?;
        let pv = self.value(pred);
        let rows = pv.rows();
        let v = pv
            .zip_map(self.value(target), |p, t| -t * p.max(PROB_CLAMP).ln())
            .sum()
            / rows as f64;
        Ok(self.push(Tensor::scalar(v), Op::Ce(pred, target), &[pred, target]))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", format!("loss has shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradients of every parameter touched by this graph, keyed by id.
    pub fn param_grads(&self, grads: &Gradients, store: &ParamStore) -> Result<Vec<(ParamId, Tensor)>> {
        let mut out = Vec::with_capacity(self.params.len());
        for &(id, v) in &self.params {
            let g = grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(store.value(id).shape()));
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter `{}`", store.name(id))));
            }
            out.push((id, g));
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(x, w) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (m, k, n) = (xv.rows(), xv.cols(), wv.shape()[1]);
                if self.nodes[x.0].needs_grad {
                    let mut dx = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, wv.data(), true, 0.0, &mut dx);
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).expect("shape"));
                }
                if self.nodes[w.0].needs_grad {
                    let mut dw = vec![0.0; k * n];
                    gemm(k, m, n, xv.data(), true, g.data(), false, 0.0, &mut dw);
                    self.accumulate(grads, *w, Tensor::new(wv.shape().to_vec(), dw).expect("shape"));
                }
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.clone());
                let n = g.cols();
                let mut db = vec![0.0; n];
                for (k, v) in g.data().iter().enumerate() {
                    db[k % n] += v;
                }
                let bshape = self.value(*b).shape().to_vec();
                self.accumulate(grads, *b, Tensor::new(bshape, db).expect("shape"));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                self.accumulate(grads, *a, g.zip_map(self.value(*b), |d, y| d * y));
                self.accumulate(grads, *b, g.zip_map(self.value(*a), |d, x| d * x));
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(grads, *a, g.map(|d| d * s));
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::Relu(a) => {
                self.accumulate(grads, *a, g.zip_map(self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 }));
            }
            Op::Tanh(a) => self.accumulate(grads, *a, g.zip_map(out, |d, y| d * (1.0 - y * y))),
            Op::Sigmoid(a) => self.accumulate(grads, *a, g.zip_map(out, |d, y| d * y * (1.0 - y))),
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_map(out, |d, y| d * y)),
            Op::Sin(a) => self.accumulate(grads, *a, g.zip_map(self.value(*a), |d, x| d * x.cos())),
            Op::Cos(a) => self.accumulate(grads, *a, g.zip_map(self.value(*a), |d, x| -d * x.sin())),
            Op::Square(a) => self.accumulate(grads, *a, g.zip_map(self.value(*a), |d, x| 2.0 * d * x)),
            Op::Atan2(y, x) => {
                let (yv, xv) = (self.value(*y), self.value(*x));
                let r2 = yv.zip_map(xv, |a, b| a * a + b * b);
                let dy = Tensor::from_fn(g.shape(), |k| g.data()[k] * xv.data()[k] / r2.data()[k]);
                let dx = Tensor::from_fn(g.shape(), |k| -g.data()[k] * yv.data()[k] / r2.data()[k]);
                self.accumulate(grads, *y, dy);
                self.accumulate(grads, *x, dx);
            }
            Op::Softmax(a) => {
                let n = out.cols();
                let mut dx = g.clone();
                for (row, (gr, sr)) in dx.data_mut().chunks_mut(n).zip(g.data().chunks(n).zip(out.data().chunks(n))) {
                    let dot: f64 = gr.iter().zip(sr).map(|(d, s)| d * s).sum();
                    for ((v, d), s) in row.iter_mut().zip(gr).zip(sr) {
                        *v = s * (d - dot);
                    }
                }
                self.accumulate(grads, *a, dx);
            }
            Op::Sum(a) => {
                let d = g.data()[0];
                self.accumulate(grads, *a, Tensor::filled(self.shape(*a), d));
            }
            Op::Mean(a) => {
                let d = g.data()[0] / self.value(*a).len() as f64;
                self.accumulate(grads, *a, Tensor::filled(self.shape(*a), d));
            }
            Op::SumLast(a) => {
                let av = self.value(*a);
                let n = av.cols();
                let dx = Tensor::from_fn(av.shape(), |k| g.data()[k / n]);
                self.accumulate(grads, *a, dx);
            }
            Op::Slice { x, start } => {
                let xv = self.value(*x);
                let (n, len) = (xv.cols(), g.cols());
                let mut dx = Tensor::zeros(xv.shape());
                for r in 0..g.rows() {
                    dx.data_mut()[r * n + start..r * n + start + len].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let len = pv.cols();
                    let mut dp = Vec::with_capacity(pv.len());
                    for r in 0..g.rows() {
                        dp.extend_from_slice(&g.row(r)[off..off + len]);
                    }
                    self.accumulate(grads, p, Tensor::new(pv.shape().to_vec(), dp).expect("shape"));
                    off += len;
                }
            }
            Op::TimeSlice { x, t } => {
                let xv = self.value(*x);
                let s = xv.shape();
                let (b, steps, f) = (s[0], s[1], s[2]);
                let mut dx = Tensor::zeros(s);
                for i in 0..b {
                    let off = (i * steps + t) * f;
                    dx.data_mut()[off..off + f].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::StackTime(steps) => {
                let s = g.shape();
                let (b, t, f) = (s[0], s[1], s[2]);
                for (k, &p) in steps.iter().enumerate() {
                    let mut dp = Vec::with_capacity(b * f);
                    for i in 0..b {
                        let off = (i * t + k) * f;
                        dp.extend_from_slice(&g.data()[off..off + f]);
                    }
                    self.accumulate(grads, p, Tensor::new(vec![b, f], dp).expect("shape"));
                }
            }
            Op::Reshape(a) => {
                let shape = self.shape(*a).to_vec();
                self.accumulate(grads, *a, g.reshape(&shape).expect("same size"));
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                let n = g.cols();
                let m = g.rows() as f64;
                let gv = self.value(*gamma).data();
                let (dgamma, dbeta) = self.scale_shift_grads(g, xhat, *gamma, *beta);
                if self.nodes[x.0].needs_grad {
                    // column sums of dx̂ and dx̂·x̂
                    let mut s1 = vec![0.0; n];
                    let mut s2 = vec![0.0; n];
                    for (k, (&d, &xh)) in g.data().iter().zip(xhat.data()).enumerate() {
                        let dxh = d * gv[k % n];
                        s1[k % n] += dxh;
                        s2[k % n] += dxh * xh;
                    }
                    let dx = Tensor::from_fn(g.shape(), |k| {
                        let j = k % n;
                        let dxh = g.data()[k] * gv[j];
                        inv_std[j] / m * (m * dxh - s1[j] - xhat.data()[k] * s2[j])
                    });
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let n = g.cols();
                let gv = self.value(*gamma).data();
                let (dgamma, dbeta) = self.scale_shift_grads(g, xhat, *gamma, *beta);
                if self.nodes[x.0].needs_grad {
                    let mut dx = Tensor::zeros(g.shape());
                    for (r, &is) in inv_std.iter().enumerate() {
                        let (gr, xr) = (g.row(r), xhat.row(r));
                        let dxh: Vec<f64> = gr.iter().zip(gv).map(|(d, w)| d * w).collect();
                        let s1: f64 = dxh.iter().sum();
                        let s2: f64 = dxh.iter().zip(xr).map(|(d, x)| d * x).sum();
                        let row = &mut dx.data_mut()[r * n..(r + 1) * n];
                        let k = is / n as f64;
                        for ((o, d), x) in row.iter_mut().zip(&dxh).zip(xr) {
                            *o = k * (n as f64 * d - s1 - x * s2);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::Affine { x, gamma, beta, shift, inv_std } => {
                let n = g.cols();
                let xv = self.value(*x);
                let xhat = Tensor::from_fn(xv.shape(), |k| (xv.data()[k] - shift[k % n]) * inv_std[k % n]);
                let gv = self.value(*gamma).data();
                let (dgamma, dbeta) = self.scale_shift_grads(g, &xhat, *gamma, *beta);
                let dx = Tensor::from_fn(g.shape(), |k| g.data()[k] * gv[k % n] * inv_std[k % n]);
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (self.value(*p), self.value(*t));
                let c = 2.0 * g.data()[0] / pv.len() as f64;
                let d = pv.zip_map(tv, |a, b| c * (a - b));
                self.accumulate(grads, *t, d.map(|v| -v));
                self.accumulate(grads, *p, d);
            }
            Op::Mae(p, t) => {
                let (pv, tv) = (self.value(*p), self.value(*t));
                let c = g.data()[0] / pv.len() as f64;
                let d = pv.zip_map(tv, |a, b| c * (a - b).signum() * f64::from(a != b));
                self.accumulate(grads, *t, d.map(|v| -v));
                self.accumulate(grads, *p, d);
            }
            Op::Bce(p, t) => {
                let (pv, tv) = (self.value(*p), self.value(*t));
                let c = g.data()[0] / pv.len() as f64;
                let inside = |x: f64| x > PROB_CLAMP && x < 1.0 - PROB_CLAMP;
                let dp = pv.zip_map(tv, |a, b| if inside(a) { c * ((1.0 - b) / (1.0 - a) - b / a) } else { 0.0 });
                let dt = pv.map(|a| {
                    let a = a.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                    -c * (a.ln() - (1.0 - a).ln())
                });
                self.accumulate(grads, *p, dp);
                self.accumulate(grads, *t, dt);
            }
            Op::Ce(p, t) => {
                let (pv, tv) = (self.value(*p), self.value(*t));
                let c = g.data()[0] / pv.rows() as f64;
                let dp = pv.zip_map(tv, |a, b| if a > PROB_CLAMP { -c * b / a } else { 0.0 });
                let dt = pv.map(|a| -c * a.max(PROB_CLAMP).ln());
                self.accumulate(grads, *p, dp);
                self.accumulate(grads, *t, dt);
            }
        }
    }

    fn scale_shift_grads(&self, g: &Tensor, xhat: &Tensor, gamma: Var, beta: Var) -> (Tensor, Tensor) {
        let n = g.cols();
        let mut dg = vec![0.0; n];
        let mut db = vec![0.0; n];
        for (k, (&d, &xh)) in g.data().iter().zip(xhat.data()).enumerate() {
            dg[k % n] += d * xh;
            db[k % n] += d;
        }
        (
            Tensor::new(self.shape(gamma).to_vec(), dg).expect("shape"),
            Tensor::new(self.shape(beta).to_vec(), db).expect("shape"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn scalar_quadratic_gradient() {
        // ½(wx − t)² → (wx − t)x
        let (w0, x0, t0) = (1.7, -0.4, 0.9);
        let mut g = Graph::new();
        let w = g.variable(Tensor::scalar(w0));
        let x = g.input(Tensor::scalar(x0));
        let wx = g.mul(w, x).unwrap();
        let e = g.add_scalar(wx, -t0);
        let sq = g.square(e);
        let loss = g.scale(sq, 0.5);
        let grads = g.backward(loss).unwrap();
        let dw = grads.get(w).unwrap().data()[0];
        assert_eq!(dw, (w0 * x0 - t0) * x0);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn activations_known_values() {
        let mut g = Graph::new();
        let z = g.input(t(&[3], &[0.0, -3.0, 2.0]));
        let s = g.sigmoid(z);
        assert_eq!(g.value(s).data()[0], 0.5);
        let r = g.relu(z);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let th = g.tanh(z);
        assert_eq!(g.value(th).data()[0], 0.0);
    }

    #[test]
    fn softmax_constant_and_normalized() {
        let mut g = Graph::new();
        let z = g.input(Tensor::filled(&[2, 4], 3.3));
        let s = g.softmax(z);
        assert!(g.value(s).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let z = g.input(t(&[2, 3], &[1e3, -2.0, 0.5, 0.1, 0.2, -7.0]));
        let s = g.softmax(z);
        for r in 0..2 {
            assert!((g.value(s).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_over_leading_axes() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_fn(&[2, 3, 4], |i| i as f64));
        let w = g.input(Tensor::from_fn(&[4, 2], |i| (i % 3) as f64));
        let y = g.matmul(x, w).unwrap();
        assert_eq!(g.shape(y), &[2, 3, 2]);
        // row 4 = x[1,1,:] = [16,17,18,19]; W columns [0,2,1,0] and [1,0,2,1]
        assert_eq!(g.value(y).row(4), &[16.0 * 0.0 + 17.0 * 2.0 + 18.0 + 0.0, 16.0 + 36.0 + 19.0]);
        assert!(g.matmul(w, x).is_err());
    }

    #[test]
    fn batch_norm_standardizes() {
        let mut g = Graph::new();
        let x = g.input(t(&[4, 2], &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 6.0, 5.0]));
        let gamma = g.input(Tensor::filled(&[2], 1.0));
        let beta = g.input(Tensor::zeros(&[2]));
        let (y, mean, var) = g.batch_norm(x, gamma, beta).unwrap();
        let v = g.value(y);
        let col0: Vec<f64> = (0..4).map(|r| v.row(r)[0]).collect();
        let m = col0.iter().sum::<f64>() / 4.0;
        let s = col0.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12);
        assert!((s - 1.0).abs() < 1e-5 / var[0]);
        assert!((0..4).all(|r| v.row(r)[1] == 0.0));
        assert_eq!(mean, vec![3.0, 5.0]);
        let one = g.input(Tensor::zeros(&[1, 2]));
        assert!(g.batch_norm(one, gamma, beta).is_err());
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 3], &[1.0, 2.0, 6.0, -1.0, 0.0, 1.0]));
        let gamma = g.input(Tensor::filled(&[3], 1.0));
        let beta = g.input(Tensor::zeros(&[3]));
        let y = g.layer_norm(x, gamma, beta).unwrap();
        for r in 0..2 {
            let row = g.value(y).row(r);
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn losses_closed_forms() {
        let mut g = Graph::new();
        let p = g.input(Tensor::filled(&[3, 4], 0.5));
        let y = g.input(Tensor::from_fn(&[3, 4], |i| (i % 2) as f64));
        let l = g.bce(p, y).unwrap();
        assert!((g.value(l).data()[0] - std::f64::consts::LN_2).abs() < 1e-15);
        let l = g.mse(p, p).unwrap();
        assert_eq!(g.value(l).data()[0], 0.0);
        let exact = g.input(Tensor::from_fn(&[3, 4], |i| (i % 2) as f64));
        let l = g.bce(exact, y).unwrap();
        assert!(g.value(l).data()[0] <= 1e-11);
        let l = g.mae(p, y).unwrap();
        assert_eq!(g.value(l).data()[0], 0.5);
    }

    #[test]
    fn zero_loss_point_has_zero_gradient() {
        let mut g = Graph::new();
        let w = g.variable(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let x = g.input(t(&[1, 2], &[0.5, -1.0]));
        let y = g.matmul(x, w).unwrap();
        let target = g.input(g.value(y).clone());
        let l = g.mse(y, target).unwrap();
        let grads = g.backward(l).unwrap();
        assert!(grads.get(w).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_needs_scalar() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::zeros(&[2]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn time_slice_and_stack_round_trip() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_fn(&[2, 3, 4], |i| i as f64));
        let steps: Vec<Var> = (0..3).map(|k| g.time_slice(x, k).unwrap()).collect();
        assert_eq!(g.value(steps[1]).row(1), &[16.0, 17.0, 18.0, 19.0]);
        let y = g.stack_time(&steps).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }
}
