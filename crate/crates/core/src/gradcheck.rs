//! Central-difference validation of every backward rule.

use crate::error::{Error, Result};
use crate::tape::{Tape, ValId};
use crate::tensor::Tensor;

/// Compare the tape's analytic gradient of `f` at `point` against central
/// finite differences with the given step. Returns the max over coordinates
/// of `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
///
/// `f` must build a scalar loss from the supplied leaf on the supplied tape,
/// and must be deterministic.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, ValId) -> Result<ValId>,
{
    if !(1e-5..=1e-2).contains(&step) {
        return Err(Error::Contract(format!("step {step} outside [1e-5, 1e-2]")));
    }

    let eval = |data: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let t = Tensor::from_vec(point.shape().to_vec(), data.to_vec())?;
        let leaf = tape.leaf(&t);
        let loss = f(&mut tape, leaf)?;
        let v = tape.value(loss).item()?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {v} during grad check")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let mut p = point.clone();
    p.requires_grad = true;
    let leaf = tape.leaf(&p);
    let loss = f(&mut tape, leaf)?;
    tape.backward(loss)?;
    let analytic: Vec<f64> = match tape.grad(leaf) {
        Some(g) => g.to_vec(),
        None => vec![0.0; point.numel()],
    };

    let mut worst: f64 = 0.0;
    let mut probe = point.data().to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = eval(&probe)?;
        probe[i] = orig - step;
        let minus = eval(&probe)?;
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        if !numeric.is_finite() {
            return Err(Error::Numeric("non-finite numeric gradient".into()));
        }
        let denom = analytic[i].abs().max(numeric.abs()).max(1.0);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Gradient check every differentiable op plus the full small conv model at
/// one seed. Returns (op name, max relative error) pairs; used by the
/// `gradcheck` command and the acceptance suite.
pub fn op_suite(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    use crate::model::build_model;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut vec_in = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    };
    let step = 1e-4;
    let mut results = Vec::new();

    let conv_input = Tensor::from_vec(vec![2, 6, 6], vec_in(72, -1.0, 1.0))?;
    let conv_kernels = Tensor::from_vec(vec![3, 2, 3, 3], vec_in(54, -1.0, 1.0))?;
    let conv_bias = Tensor::from_vec(vec![3], vec_in(3, -0.5, 0.5))?;
    let (k1, b1) = (conv_kernels.clone(), conv_bias.clone());
    results.push((
        "conv2d/input",
        grad_check(
            move |tape, x| {
                let k = tape.constant(k1.data(), k1.shape());
                let b = tape.constant(b1.data(), b1.shape());
                let c = tape.conv2d(x, k, b, 1)?;
                Ok(tape.sum(c))
            },
            &conv_input,
            step,
        )?,
    ));
    let (i2, b2) = (conv_input.clone(), conv_bias.clone());
    results.push((
        "conv2d/kernels",
        grad_check(
            move |tape, x| {
                let i = tape.constant(i2.data(), i2.shape());
                let b = tape.constant(b2.data(), b2.shape());
                let c = tape.conv2d(i, x, b, 1)?;
                Ok(tape.sum(c))
            },
            &conv_kernels,
            step,
        )?,
    ));
    let (i3, k3) = (conv_input.clone(), conv_kernels.clone());
    results.push((
        "conv2d/bias",
        grad_check(
            move |tape, x| {
                let i = tape.constant(i3.data(), i3.shape());
                let k = tape.constant(k3.data(), k3.shape());
                let c = tape.conv2d(i, k, x, 1)?;
                Ok(tape.sum(c))
            },
            &conv_bias,
            step,
        )?,
    ));

    let relu_point = Tensor::from_vec(
        vec![12],
        vec_in(12, 0.05, 2.0)
            .into_iter()
            .enumerate()
            .map(|(i, v)| if i % 2 == 0 { v } else { -v })
            .collect(),
    )?;
    results.push((
        "relu",
        grad_check(
            |tape, x| {
                let a = tape.relu(x);
                let m = tape.mul(a, a)?;
                Ok(tape.sum(m))
            },
            &relu_point,
            step,
        )?,
    ));

    let sig_point = Tensor::from_vec(vec![12], vec_in(12, -4.0, 4.0))?;
    results.push((
        "sigmoid",
        grad_check(
            |tape, x| {
                let s = tape.sigmoid(x);
                let m = tape.mul(s, s)?;
                Ok(tape.sum(m))
            },
            &sig_point,
            step,
        )?,
    ));

    let pred = Tensor::from_vec(vec![10], vec_in(10, 0.05, 0.95))?;
    let target = vec_in(10, 0.0, 1.0);
    results.push((
        "bce_loss",
        grad_check(
            move |tape, p| {
                let t = tape.constant(&target, &[10]);
                tape.bce(p, t)
            },
            &pred,
            step,
        )?,
    ));

    let cat_a = Tensor::from_vec(vec![2, 3, 3], vec_in(18, -1.0, 1.0))?;
    let cat_b = vec_in(9, -1.0, 1.0);
    results.push((
        "concat_channels",
        grad_check(
            move |tape, a| {
                let b = tape.constant(&cat_b, &[1, 3, 3]);
                let c = tape.concat_channels(a, b)?;
                let m = tape.mul(c, c)?;
                Ok(tape.sum(m))
            },
            &cat_a,
            step,
        )?,
    ));

    let model = build_model("small-conv-3", 3, (1, 8, 8), seed)?;
    let frame = Tensor::from_vec(vec![1, 8, 8], vec_in(64, 0.0, 1.0))?;
    let frame_target = vec_in(64, 0.0, 1.0);
    let mut worst = 0.0f64;
    for probe in 0..model.parameters().len() {
        let point = model.parameters()[probe].clone();
        let (m, f, t) = (&model, &frame, &frame_target);
        let err = grad_check(
            move |tape, x| {
                let mut ids = m.register_params(tape);
                ids[probe] = x;
                let input = tape.constant(f.data(), f.shape());
                let out = m.forward_on_tape(tape, input, &ids)?;
                let tid = tape.constant(t, &[1, 8, 8]);
                tape.bce(out, tid)
            },
            &point,
            step,
        )?;
        worst = worst.max(err);
    }
    results.push(("small-conv-3/full-loss", worst));

    Ok(results)
}
