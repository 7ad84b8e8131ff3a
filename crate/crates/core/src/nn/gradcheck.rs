use super::graph::{Graph, Var};
use super::model::ModelState;
use super::params::ParamStore;
use super::tensor::Tensor;
use super::train::{loss_eval, LossKind};
use crate::error::{Error, Result};

pub const GRAD_CHECK_EPS: f64 = 1e-5;

/// Below this magnitude a gradient entry is compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, floor)`. The floor keeps entries whose true
/// gradient is zero (a bias feeding batch norm) from dividing rounding noise
/// by zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares reverse-mode gradients of `build` with central differences for
/// every trainable entry of `store`, returning the largest relative error.
/// `build` must be a pure function of the parameter values.
pub fn grad_check_with<F>(store: &mut ParamStore, epsilon: f64, mut build: F) -> Result<f64>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    let grads = g.backward(loss)?;
    let analytic = g.param_grads(&grads, store)?;
    let mut worst = 0.0f64;
    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, store)?;
        Ok(g.value(l).data()[0])
    };
    for (id, grad) in analytic {
        if !store.is_trainable(id) {
            continue;
        }
        for k in 0..grad.len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + epsilon;
            let up = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig - epsilon;
            let down = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            if !numeric.is_finite() {
                return Err(Error::NonFinite(format!("finite difference for `{}`", store.name(id))));
            }
            worst = worst.max(relative_error(grad.data()[k], numeric));
        }
    }
    Ok(worst)
}

/// Gradient check of `loss(model(x), target)`. Dropout masks are frozen by
/// replaying the same RNG state on every evaluation; batch norm uses batch
/// statistics throughout.
pub fn grad_check(model: &ModelState, x: &Tensor, target: &Tensor, loss: LossKind, epsilon: f64) -> Result<f64> {
    let mut probe = model.clone();
    probe.set_training(true);
    let rng = probe.rng().clone();
    let mut store = probe.params().clone();
    grad_check_with(&mut store, epsilon, |g, ps| {
        let mut m = probe.clone();
        *m.params_mut() = ps.clone();
        m.set_rng(rng.clone());
        let xv = g.input(x.clone());
        let tv = g.input(target.clone());
        let y = m.forward(g, xv)?;
        Ok(loss_eval(g, loss, y, tv)?.total)
    })
}

/// Named gradient checks covering every layer kind, every loss and the
/// graph primitives used by the estimators. Each of `configs` rounds draws a
/// fresh random network and inputs.
pub fn gradient_suite(configs: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    use super::model::{LayerSpec::*, NetworkSpec};
    use crate::random::rng_for;
    use rand::Rng;

    let mut out = Vec::new();
    for c in 0..configs {
        let mut rng = rng_for(seed, c as u64);
        let batch = rng.random_range(3..6);
        let din = rng.random_range(2..5);
        let hid = rng.random_range(3..6);
        let dout = rng.random_range(2..4);
        let mut rand_t = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0));
        let x = rand_t(&[batch, din]);
        let real_t = rand_t(&[batch, dout]);
        let prob_t = real_t.map(|v| (v + 1.0) / 2.0);
        let onehot = Tensor::from_fn(&[batch, dout], |i| if i % dout == (i / dout) % dout { 1.0 } else { 0.0 });
        let seq = rand_t(&[batch, 3, din]);
        let seq_t = rand_t(&[batch, 3, hid]);

        let nets: Vec<(&str, Vec<super::model::LayerSpec>, LossKind, &Tensor, &Tensor)> = vec![
            ("dense+relu/mse", vec![Dense { units: hid }, Relu, Dense { units: dout }], LossKind::Mse, &x, &real_t),
            ("dense+tanh/mae", vec![Dense { units: hid }, Tanh, Dense { units: dout }], LossKind::Mae, &x, &real_t),
            ("sigmoid/bce", vec![Dense { units: hid }, Tanh, Dense { units: dout }, Sigmoid], LossKind::Bce, &x, &prob_t),
            ("softmax/ce", vec![Dense { units: hid }, Relu, Dense { units: dout }, Softmax], LossKind::Ce, &x, &onehot),
            ("batch_norm", vec![Dense { units: hid }, BatchNorm, Tanh, Dense { units: dout }], LossKind::Mse, &x, &real_t),
            ("layer_norm", vec![Dense { units: hid }, LayerNorm, Tanh, Dense { units: dout }], LossKind::Mse, &x, &real_t),
            ("dropout(frozen mask)", vec![Dense { units: hid }, Tanh, Dropout { rate: 0.3 }, Dense { units: dout }], LossKind::Mse, &x, &real_t),
            ("composite", vec![Dense { units: hid }, Tanh, Dense { units: dout }, Sigmoid], LossKind::Composite { lambda: 0.7, split: 1 }, &x, &prob_t),
            ("lstm", vec![Lstm { hidden: hid }], LossKind::Mse, &seq, &seq_t),
        ];
        for (name, layers, loss, input, target) in nets {
            let in_dim = *input.shape().last().expect("shape");
            let spec = NetworkSpec::new(in_dim, layers)?;
            let mut model = super::model::ModelState::new(spec, seed ^ (c as u64 * 7919))?;
            // move biases and norm scales off their trivial init values
            let mut prng = rng_for(seed, 10_000 + c as u64);
            for id in model.params().trainable_ids().collect::<Vec<_>>() {
                for v in model.params_mut().value_mut(id).data_mut() {
                    *v += prng.random_range(-0.3..0.3);
                }
            }
            let err = grad_check(&model, input, target, loss, GRAD_CHECK_EPS)?;
            out.push((name.to_string(), err));
        }

        // primitives used by the parametric estimator
        let mut store = ParamStore::new();
        let a = store.add("a", rand_t(&[batch, 4]));
        let b = store.add("b", rand_t(&[batch, 4]));
        let err = grad_check_with(&mut store, GRAD_CHECK_EPS, |g, ps| {
            let (a, b) = (g.param(ps, a), g.param(ps, b));
            let ang = g.atan2(a, b)?;
            let s = g.sin(ang);
            let co = g.cos(a);
            let e = g.exp(b);
            let sq = g.square(e);
            let left = g.slice(s, 1, 2)?;
            let right = g.slice(co, 0, 2)?;
            let cat = g.concat(&[left, right, sq])?;
            let r = g.reshape(cat, &[batch * 8])?;
            let prod = g.mul(r, r)?;
            let d = g.sub(prod, r)?;
            let d = g.add_scalar(d, 0.5);
            let rows = g.reshape(d, &[batch, 8])?;
            let sl = g.sum_last(rows);
            let m = g.mean(sl);
            Ok(g.scale(m, 1.3))
        })?;
        out.push(("sin/cos/exp/atan2/concat".to_string(), err));
    }
    Ok(out)
}
