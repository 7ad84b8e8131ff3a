use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::model::ModelState;
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::random::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Mae,
    Bce,
    Ce,
    /// `bce(pred[.., :split], target[.., :split]) + λ·mse(pred[.., split:], target[.., split:])`.
    Composite { lambda: f64, split: usize },
}

/// Loss node plus, for the composite loss, its two parts.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub bce: Option<Var>,
    pub mse: Option<Var>,
}

pub fn loss_eval(g: &mut Graph, kind: LossKind, pred: Var, target: Var) -> Result<LossParts> {
    let single = |total| LossParts {
        total,
        bce: None,
        mse: None,
    };
    Ok(match kind {
        LossKind::Mse => single(g.mse(pred, target)?),
        LossKind::Mae => single(g.mae(pred, target)?),
        LossKind::Bce => single(g.bce(pred, target)?),
        LossKind::Ce => single(g.ce(pred, target)?),
        LossKind::Composite { lambda, split } => {
            if lambda < 0.0 {
                return Err(Error::config("composite weight must be nonnegative"));
            }
            let cols = g.value(pred).cols();
            if split == 0 || split >= cols {
                return Err(Error::config(format!("composite split {split} outside 1..{cols}")));
            }
            let (p1, t1) = (g.slice(pred, 0, split)?, g.slice(target, 0, split)?);
            let (p2, t2) = (g.slice(pred, split, cols - split)?, g.slice(target, split, cols - split)?);
            let b = g.bce(p1, t1)?;
            let m = g.mse(p2, t2)?;
            let wm = g.scale(m, lambda);
            LossParts {
                total: g.add(b, wm)?,
                bce: Some(b),
                mse: Some(m),
            }
        }
    })
}

/// Scalar loss for plain tensors.
pub fn loss_value(kind: LossKind, pred: &Tensor, target: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let (p, t) = (g.input(pred.clone()), g.input(target.clone()));
    let l = loss_eval(&mut g, kind, p, t)?;
    Ok(g.value(l.total).data()[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::config("learning rate must be positive and batch size at least 1"));
        }
        Ok(())
    }
}

/// `Θ ← Θ − η·g`. Losses are batch means, so `g` already equals
/// `(1/D)·Σ_d ∇J⁽ᵈ⁾`.
pub fn sgd_step(params: &mut ParamStore, grads: &[(ParamId, Tensor)], learning_rate: f64) {
    for (id, g) in grads {
        if !params.is_trainable(*id) {
            continue;
        }
        for (w, d) in params.value_mut(*id).data_mut().iter_mut().zip(g.data()) {
            *w -= learning_rate * d;
        }
    }
}

/// Shuffled minibatches for one epoch. A trailing batch of a single sample
/// is merged into the previous one so batch norm always sees two rows.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, 1000 + epoch as u64);
    idx.shuffle(&mut rng);
    let mut batches: Vec<Vec<usize>> = idx.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap_or_default();
        if let Some(prev) = batches.last_mut() {
            prev.extend(last);
        }
    }
    batches
}

/// Minibatch SGD where `loss_fn` builds the loss for one batch of sample
/// indices. Returns the mean loss of each epoch.
pub fn fit_with<F>(model: &mut ModelState, n_samples: usize, cfg: &TrainConfig, mut loss_fn: F) -> Result<Vec<f64>>
where
    F: FnMut(&mut Graph, &mut ModelState, &[usize]) -> Result<Var>,
{
    cfg.validate()?;
    model.set_training(true);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let batches = epoch_batches(n_samples, cfg.batch_size, cfg.seed, epoch);
        for batch in &batches {
            let mut g = Graph::new();
            let loss = loss_fn(&mut g, model, batch)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            let grads = g.backward(loss)?;
            let pg = g.param_grads(&grads, model.params())?;
            sgd_step(model.params_mut(), &pg, cfg.learning_rate);
            total += value * batch.len() as f64;
        }
        history.push(total / n_samples as f64);
    }
    model.set_training(false);
    Ok(history)
}

/// Supervised training on row-aligned `inputs` and `targets`.
pub fn fit(model: &mut ModelState, inputs: &Tensor, targets: &Tensor, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let n = inputs.shape()[0];
    if targets.shape()[0] != n {
        return Err(Error::shape("fit", format!("{n} inputs vs {} targets", targets.shape()[0])));
    }
    fit_with(model, n, cfg, |g, m, batch| {
        let x = g.input(inputs.gather(batch));
        let t = g.input(targets.gather(batch));
        let y = m.forward(g, x)?;
        Ok(loss_eval(g, cfg.loss, y, t)?.total)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{LayerSpec, NetworkSpec};

    fn eval(kind: LossKind, p: &[f64], t: &[f64]) -> f64 {
        let shape = [1, p.len()];
        loss_value(kind, &Tensor::new(shape.to_vec(), p.to_vec()).unwrap(), &Tensor::new(shape.to_vec(), t.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn loss_closed_forms() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(eval(LossKind::Mse, &x, &x), 0.0);
        assert!(eval(LossKind::Bce, &[0.0, 1.0, 1.0], &[0.0, 1.0, 1.0]) <= 1e-11);
        let half = eval(LossKind::Bce, &[0.5; 4], &[1.0, 0.0, 1.0, 1.0]);
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((eval(LossKind::Mae, &[1.0, 2.0], &[0.0, 4.0]) - 1.5).abs() < 1e-15);
        let ce = eval(LossKind::Ce, &[0.2, 0.8], &[0.0, 1.0]);
        assert!((ce + 0.8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn composite_is_weighted_sum_of_parts() {
        let p = [0.3, 0.9, 1.5, -0.5];
        let t = [0.0, 1.0, 1.0, 0.0];
        let bce = eval(LossKind::Bce, &p[..2], &t[..2]);
        let mse = eval(LossKind::Mse, &p[2..], &t[2..]);
        assert_eq!(eval(LossKind::Composite { lambda: 0.0, split: 2 }, &p, &t), bce);
        let c = eval(LossKind::Composite { lambda: 2.5, split: 2 }, &p, &t);
        assert!((c - (bce + 2.5 * mse)).abs() < 1e-15);

        let mut g = Graph::new();
        let pv = g.input(Tensor::new(vec![1, 4], p.to_vec()).unwrap());
        let tv = g.input(Tensor::new(vec![1, 4], t.to_vec()).unwrap());
        let parts = loss_eval(&mut g, LossKind::Composite { lambda: 1.0, split: 2 }, pv, tv).unwrap();
        assert_eq!(g.value(parts.bce.unwrap()).data()[0], bce);
        assert_eq!(g.value(parts.mse.unwrap()).data()[0], mse);
    }

    #[test]
    fn sgd_step_updates() {
        let mut ps = ParamStore::new();
        let w = ps.add("w", Tensor::scalar(2.0));
        sgd_step(&mut ps, &[(w, Tensor::scalar(0.0))], 0.1);
        assert_eq!(ps.value(w).data()[0], 2.0);
        sgd_step(&mut ps, &[(w, Tensor::scalar(3.0))], 0.1);
        assert!((ps.value(w).data()[0] - 1.7).abs() < 1e-15);
    }

    #[test]
    fn quadratic_descends_monotonically() {
        // L(w) = ½(w·x − t)², stability bound η < 2/x²
        let (x, t) = (1.5, 2.0);
        let mut ps = ParamStore::new();
        let w = ps.add("w", Tensor::scalar(-3.0));
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let mut g = Graph::new();
            let wv = g.param(&ps, w);
            let xv = g.input(Tensor::scalar(x));
            let p = g.mul(wv, xv).unwrap();
            let tv = g.input(Tensor::scalar(t));
            let l = g.mse(p, tv).unwrap();
            let l = g.scale(l, 0.5);
            let loss = g.value(l).data()[0];
            assert!(loss <= prev);
            prev = loss;
            let grads = g.backward(l).unwrap();
            let pg = g.param_grads(&grads, &ps).unwrap();
            let wv_now = ps.value(w).data()[0];
            assert!((pg[0].1.data()[0] - (wv_now * x - t) * x).abs() < 1e-12);
            sgd_step(&mut ps, &pg, 0.5);
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn batches_cover_every_sample_once() {
        let b = epoch_batches(17, 4, 3, 0);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..17).collect::<Vec<_>>());
        assert!(b.iter().all(|x| x.len() >= 2));
        assert_ne!(b, epoch_batches(17, 4, 3, 1));
    }

    fn toy_problem() -> (Tensor, Tensor) {
        let x = Tensor::from_fn(&[64, 2], |i| ((i * 37 % 64) as f64 / 32.0) - 1.0);
        let y = Tensor::from_fn(&[64, 1], |r| (x.row(r)[0] - 0.5 * x.row(r)[1]).tanh());
        (x, y)
    }

    #[test]
    fn fit_reduces_loss_and_is_deterministic() {
        use LayerSpec::*;
        let spec = NetworkSpec::new(2, vec![Dense { units: 8 }, BatchNorm, Tanh, Dropout { rate: 0.1 }, Dense { units: 1 }]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 8,
            epochs: 30,
            seed: 4,
            loss: LossKind::Mse,
        };
        let (x, y) = toy_problem();
        let run = || {
            let mut m = ModelState::new(spec.clone(), 11).unwrap();
            let h = fit(&mut m, &x, &y, &cfg).unwrap();
            (m, h)
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert!(ha.last().unwrap() < &(0.3 * ha[0]), "{ha:?}");
        assert!(!a.is_training());
    }
}
