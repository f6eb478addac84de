//! Gradient and convolution oracles.
//!
//! Every differentiable op is swept against central finite differences on
//! randomized inputs, and the convolution forward pass is compared against an
//! independently written naive triple-sum, bit for bit.

use asi_core::gradcheck::grad_check;
use asi_core::kernels;
use asi_core::model::build_model;
use asi_core::tape::Tape;
use asi_core::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const STEP: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Naive convolution written independently of the library: explicit output
/// loops and an explicit triple sum in channel/row/column order. Padding is
/// computed from first principles (centered, extra at bottom/right).
#[allow(clippy::too_many_arguments)]
fn naive_conv2d(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    kernels: &[f64],
    c_out: usize,
    kh: usize,
    kw: usize,
    bias: &[f64],
    stride: usize,
) -> Vec<f64> {
    let oh = (h + stride - 1) / stride;
    let ow = (w + stride - 1) / stride;
    let pad_h = if (oh - 1) * stride + kh > h { (oh - 1) * stride + kh - h } else { 0 };
    let pad_w = if (ow - 1) * stride + kw > w { (ow - 1) * stride + kw - w } else { 0 };
    let (pt, pl) = (pad_h / 2, pad_w / 2);
    let mut out = vec![0.0; c_out * oh * ow];
    for co in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[co];
                for ci in 0..c_in {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                let iv = input[ci * h * w + iy as usize * w + ix as usize];
                                let kv = kernels
                                    [co * c_in * kh * kw + ci * kh * kw + ky * kw + kx];
                                acc += iv * kv;
                            }
                        }
                    }
                }
                out[co * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    out
}

#[test]
fn conv_forward_matches_naive_oracle_exactly() {
    let mut r = rng(11);
    for case in 0..120 {
        let c_in = r.gen_range(1..=4);
        let c_out = r.gen_range(1..=3);
        let k = *[1usize, 3].iter().nth(r.gen_range(0..2)).unwrap();
        let h = r.gen_range(k..=8);
        let w = r.gen_range(k..=8);
        let stride = r.gen_range(1..=2);
        let input = random_vec(&mut r, c_in * h * w, -1.0, 1.0);
        let kernels = random_vec(&mut r, c_out * c_in * k * k, -1.0, 1.0);
        let bias = random_vec(&mut r, c_out, -0.5, 0.5);
        let ours = kernels::conv2d_forward(
            &input,
            (c_in, h, w),
            &kernels,
            (c_out, k, k),
            &bias,
            stride,
        );
        let oracle = naive_conv2d(&input, c_in, h, w, &kernels, c_out, k, k, &bias, stride);
        assert_eq!(ours, oracle, "case {case}: exact equality, same summation order");
    }
}

#[test]
fn conv_7x7_kernel_matches_naive_oracle() {
    let mut r = rng(12);
    for _ in 0..10 {
        let (c_in, c_out, k, h, w) = (2, 2, 7, 8, 8);
        let input = random_vec(&mut r, c_in * h * w, -1.0, 1.0);
        let kernels = random_vec(&mut r, c_out * c_in * k * k, -0.3, 0.3);
        let bias = random_vec(&mut r, c_out, -0.1, 0.1);
        let ours =
            kernels::conv2d_forward(&input, (c_in, h, w), &kernels, (c_out, k, k), &bias, 1);
        let oracle = naive_conv2d(&input, c_in, h, w, &kernels, c_out, k, k, &bias, 1);
        assert_eq!(ours, oracle);
    }
}

#[test]
fn conv_gradients_check_out_for_all_three_inputs() {
    let mut r = rng(21);
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let c_in = r.gen_range(1..=3);
        let c_out = r.gen_range(1..=2);
        let k = *[1usize, 3].iter().nth(r.gen_range(0..2)).unwrap();
        let h = r.gen_range(k.max(3)..=6);
        let w = r.gen_range(k.max(3)..=6);
        let stride = r.gen_range(1..=2);
        let input =
            Tensor::from_vec(vec![c_in, h, w], random_vec(&mut r, c_in * h * w, -1.0, 1.0))
                .unwrap();
        let kers = Tensor::from_vec(
            vec![c_out, c_in, k, k],
            random_vec(&mut r, c_out * c_in * k * k, -1.0, 1.0),
        )
        .unwrap();
        let bias = Tensor::from_vec(vec![c_out], random_vec(&mut r, c_out, -0.5, 0.5)).unwrap();

        // d/d(input)
        let (kc, bc) = (kers.clone(), bias.clone());
        let e1 = grad_check(
            move |tape, x| {
                let kid = tape.constant(kc.data(), kc.shape());
                let bid = tape.constant(bc.data(), bc.shape());
                let c = tape.conv2d(x, kid, bid, stride)?;
                Ok(tape.sum(c))
            },
            &input,
            STEP,
        )
        .unwrap();
        // d/d(kernels)
        let (ic, bc) = (input.clone(), bias.clone());
        let e2 = grad_check(
            move |tape, x| {
                let iid = tape.constant(ic.data(), ic.shape());
                let bid = tape.constant(bc.data(), bc.shape());
                let c = tape.conv2d(iid, x, bid, stride)?;
                Ok(tape.sum(c))
            },
            &kers,
            STEP,
        )
        .unwrap();
        // d/d(bias)
        let (ic, kc) = (input.clone(), kers.clone());
        let e3 = grad_check(
            move |tape, x| {
                let iid = tape.constant(ic.data(), ic.shape());
                let kid = tape.constant(kc.data(), kc.shape());
                let c = tape.conv2d(iid, kid, x, stride)?;
                Ok(tape.sum(c))
            },
            &bias,
            STEP,
        )
        .unwrap();
        worst = worst.max(e1).max(e2).max(e3);
    }
    assert!(worst < TOL, "worst conv gradient error {worst}");
}

#[test]
fn relu_gradients_away_from_kink() {
    let mut r = rng(22);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.gen_range(1..=16);
        // Keep inputs clear of the non-differentiable point at zero.
        let data: Vec<f64> = (0..n)
            .map(|_| {
                let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * r.gen_range(0.05..2.0)
            })
            .collect();
        let point = Tensor::from_vec(vec![n], data).unwrap();
        let err = grad_check(
            |tape, x| {
                let a = tape.relu(x);
                let sq = tape.mul(a, a)?;
                Ok(tape.sum(sq))
            },
            &point,
            STEP,
        )
        .unwrap();
        worst = worst.max(err);
    }
    assert!(worst < TOL, "worst relu gradient error {worst}");
}

#[test]
fn sigmoid_gradients_and_scalar_oracle() {
    let mut r = rng(23);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.gen_range(1..=16);
        let point = Tensor::from_vec(vec![n], random_vec(&mut r, n, -4.0, 4.0)).unwrap();
        let err = grad_check(
            |tape, x| {
                let s = tape.sigmoid(x);
                let sq = tape.mul(s, s)?;
                Ok(tape.sum(sq))
            },
            &point,
            STEP,
        )
        .unwrap();
        worst = worst.max(err);
    }
    assert!(worst < TOL, "worst sigmoid gradient error {worst}");

    // Forward values against the scalar formula.
    let xs = random_vec(&mut rng(24), 3, -3.0, 3.0);
    let ours = kernels::sigmoid(&xs);
    for (x, o) in xs.iter().zip(&ours) {
        let direct = 1.0 / (1.0 + (-x).exp());
        assert!((o - direct).abs() < 1e-12);
    }
}

#[test]
fn bce_gradients_match_central_differences() {
    let mut r = rng(25);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.gen_range(1..=12);
        let pred = Tensor::from_vec(vec![n], random_vec(&mut r, n, 0.05, 0.95)).unwrap();
        let target = random_vec(&mut r, n, 0.0, 1.0);
        let t = target.clone();
        let err = grad_check(
            move |tape, p| {
                let tid = tape.constant(&t, &[t.len()]);
                tape.bce(p, tid)
            },
            &pred,
            STEP,
        )
        .unwrap();
        worst = worst.max(err);
    }
    assert!(worst < TOL, "worst bce gradient error {worst}");
}

#[test]
fn bce_matches_elementwise_scalar_oracle() {
    let mut r = rng(26);
    let pred = random_vec(&mut r, 4, 0.01, 0.99);
    let target = random_vec(&mut r, 4, 0.0, 1.0);
    let ours = kernels::bce(&pred, &target);
    let mut oracle = 0.0;
    for (p, t) in pred.iter().zip(&target) {
        oracle += -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
    }
    oracle /= pred.len() as f64;
    assert!((ours - oracle).abs() < 1e-12);
}

#[test]
fn concat_gradient_is_identity_split() {
    let mut r = rng(27);
    for _ in 0..100 {
        let (h, w) = (r.gen_range(2..=4), r.gen_range(2..=4));
        let c1 = r.gen_range(1..=2);
        let a = Tensor::from_vec(vec![c1, h, w], random_vec(&mut r, c1 * h * w, -1.0, 1.0))
            .unwrap();
        let b_data = random_vec(&mut r, h * w, -1.0, 1.0);
        let err = grad_check(
            move |tape, x| {
                let bid = tape.constant(&b_data, &[1, h, w]);
                let c = tape.concat_channels(x, bid)?;
                Ok(tape.sum(c))
            },
            &a,
            STEP,
        )
        .unwrap();
        assert!(err < TOL);
    }

    // Direct form of the spec example: grad of sum(concat(a,b)) w.r.t. a is ones.
    let mut tape = Tape::new();
    let a = Tensor::from_vec(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap().with_grad();
    let aid = tape.leaf(&a);
    let bid = tape.constant(&[1.0; 4], &[1, 2, 2]);
    let c = tape.concat_channels(aid, bid).unwrap();
    let loss = tape.sum(c);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(aid).unwrap(), &[1.0; 4]);
}

#[test]
fn scalar_bce_of_sigmoid_matches_hand_formula() {
    // loss = bce(sigmoid(w * x), t), scalar: d/dw = (sigmoid(wx) - t) * x.
    let mut r = rng(28);
    for _ in 0..50 {
        let w0 = r.gen_range(-2.0..2.0);
        let x0: f64 = r.gen_range(-2.0..2.0);
        let t0: f64 = r.gen_range(0.0..1.0);
        let w = Tensor::scalar(w0);
        let (x1, t1) = (x0, t0);
        let mut tape = Tape::new();
        let mut wt = w.clone();
        wt.requires_grad = true;
        let wid = tape.leaf(&wt);
        let xid = tape.constant(&[x1], &[1]);
        let prod = tape.mul(wid, xid).unwrap();
        let s = tape.sigmoid(prod);
        let tid = tape.constant(&[t1], &[1]);
        let loss = tape.bce(s, tid).unwrap();
        tape.backward(loss).unwrap();
        let got = tape.grad(wid).unwrap()[0];
        let sig = 1.0 / (1.0 + (-(w0 * x0)).exp());
        let expect = (sig - t0) * x0;
        assert!((got - expect).abs() < 1e-10, "got {got} expect {expect}");
    }
}

#[test]
fn full_model_loss_gradients_check_out() {
    // The whole small conv net, parameter tensor by parameter tensor.
    let mut r = rng(31);
    let model = build_model("small-conv-3", 3, (1, 8, 8), 77).unwrap();
    let frame =
        Tensor::from_vec(vec![1, 8, 8], random_vec(&mut r, 64, 0.0, 1.0)).unwrap();
    let target = random_vec(&mut r, 64, 0.0, 1.0);
    let mut worst: f64 = 0.0;
    for probe_idx in 0..model.parameters().len() {
        let point = model.parameters()[probe_idx].clone();
        let (m, f, t) = (&model, &frame, &target);
        let err = grad_check(
            move |tape, x| {
                let mut ids = m.register_params(tape);
                ids[probe_idx] = x;
                let input = tape.constant(f.data(), f.shape());
                let out = m.forward_on_tape(tape, input, &ids)?;
                let tid = tape.constant(t, &[1, 8, 8]);
                tape.bce(out, tid)
            },
            &point,
            STEP,
        )
        .unwrap();
        worst = worst.max(err);
    }
    assert!(worst < TOL, "worst full-model gradient error {worst}");
}
