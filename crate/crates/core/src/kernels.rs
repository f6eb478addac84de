//! Pure array math behind the tape ops.
//!
//! Everything here is a plain function over `&[f64]`, shared by the autodiff
//! tape and the inference path so the two can never disagree. Convolution is
//! same-padded: output spatial dims are `ceil(in/stride)` and padding is split
//! evenly with the extra row/column at the bottom/right.

/// Clip bound applied to BCE log arguments. Saturated sigmoids would
/// otherwise send the loss to infinity.
pub const BCE_CLIP_EPS: f64 = 1e-7;

pub fn conv2d_out_dims(h: usize, w: usize, stride: usize) -> (usize, usize) {
    (h.div_ceil(stride), w.div_ceil(stride))
}

fn same_padding(h: usize, w: usize, kh: usize, kw: usize, stride: usize) -> (usize, usize) {
    let (oh, ow) = conv2d_out_dims(h, w, stride);
    let pad_h = ((oh - 1) * stride + kh).saturating_sub(h);
    let pad_w = ((ow - 1) * stride + kw).saturating_sub(w);
    (pad_h / 2, pad_w / 2)
}

/// Same-padded cross-correlation. Per output element the accumulation order
/// is bias, then channel, then kernel row, then kernel column; the naive
/// oracle in the tests mirrors it so the comparison is exact, not
/// approximate. Stride 1 takes a shift-add fast path with the same
/// per-element order.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    input: &[f64],
    (c_in, h, w): (usize, usize, usize),
    kernels: &[f64],
    (c_out, kh, kw): (usize, usize, usize),
    bias: &[f64],
    stride: usize,
) -> Vec<f64> {
    if stride == 1 {
        return conv2d_forward_s1(input, (c_in, h, w), kernels, (c_out, kh, kw), bias);
    }
    let (oh, ow) = conv2d_out_dims(h, w, stride);
    let (pad_top, pad_left) = same_padding(h, w, kh, kw, stride);
    let mut out = vec![0.0; c_out * oh * ow];
    for co in 0..c_out {
        let kc = co * c_in * kh * kw;
        let oc = co * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[co];
                for ci in 0..c_in {
                    let ic = ci * h * w;
                    let kci = kc + ci * kh * kw;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad_top as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let irow = ic + iy as usize * w;
                        let krow = kci + ky * kw;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad_left as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += input[irow + ix as usize] * kernels[krow + kx];
                        }
                    }
                }
                out[oc + oy * ow + ox] = acc;
            }
        }
    }
    out
}

/// Valid output range for a kernel tap offset by `d` along an axis of size
/// `n`: positions where the shifted read stays in bounds.
#[inline]
fn tap_range(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = ((n as isize - d).max(0) as usize).min(n);
    (lo, hi)
}

fn conv2d_forward_s1(
    input: &[f64],
    (c_in, h, w): (usize, usize, usize),
    kernels: &[f64],
    (c_out, kh, kw): (usize, usize, usize),
    bias: &[f64],
) -> Vec<f64> {
    let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
    let plane = h * w;
    let mut out = vec![0.0; c_out * plane];
    for co in 0..c_out {
        let oplane = &mut out[co * plane..(co + 1) * plane];
        oplane.fill(bias[co]);
        for ci in 0..c_in {
            let iplane = &input[ci * plane..(ci + 1) * plane];
            let kbase = (co * c_in + ci) * kh * kw;
            for ky in 0..kh {
                let dy = ky as isize - pt as isize;
                let (oy0, oy1) = tap_range(dy, h);
                for kx in 0..kw {
                    let k = kernels[kbase + ky * kw + kx];
                    let dx = kx as isize - pl as isize;
                    let (ox0, ox1) = tap_range(dx, w);
                    if ox0 >= ox1 {
                        continue;
                    }
                    for oy in oy0..oy1 {
                        let iy = (oy as isize + dy) as usize;
                        let ix0 = (ox0 as isize + dx) as usize;
                        let orow = &mut oplane[oy * w + ox0..oy * w + ox1];
                        let irow = &iplane[iy * w + ix0..iy * w + ix0 + (ox1 - ox0)];
                        for (o, i) in orow.iter_mut().zip(irow) {
                            *o += k * i;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`conv2d_forward`]. `want_input` skips the input-gradient
/// work when the conv input is a constant (common for the first layer).
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    d_out: &[f64],
    input: &[f64],
    (c_in, h, w): (usize, usize, usize),
    kernels: &[f64],
    (c_out, kh, kw): (usize, usize, usize),
    stride: usize,
    want_input: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    if stride == 1 {
        return conv2d_backward_s1(
            d_out,
            input,
            (c_in, h, w),
            kernels,
            (c_out, kh, kw),
            want_input,
        );
    }
    let (oh, ow) = conv2d_out_dims(h, w, stride);
    let (pad_top, pad_left) = same_padding(h, w, kh, kw, stride);
    let mut d_input = vec![0.0; c_in * h * w];
    let mut d_kernels = vec![0.0; c_out * c_in * kh * kw];
    let mut d_bias = vec![0.0; c_out];
    for co in 0..c_out {
        let kc = co * c_in * kh * kw;
        let oc = co * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let g = d_out[oc + oy * ow + ox];
                d_bias[co] += g;
                for ci in 0..c_in {
                    let ic = ci * h * w;
                    let kci = kc + ci * kh * kw;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad_top as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let irow = ic + iy as usize * w;
                        let krow = kci + ky * kw;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad_left as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            if want_input {
                                d_input[irow + ix as usize] += g * kernels[krow + kx];
                            }
                            d_kernels[krow + kx] += g * input[irow + ix as usize];
                        }
                    }
                }
            }
        }
    }
    (d_input, d_kernels, d_bias)
}

fn conv2d_backward_s1(
    d_out: &[f64],
    input: &[f64],
    (c_in, h, w): (usize, usize, usize),
    kernels: &[f64],
    (c_out, kh, kw): (usize, usize, usize),
    want_input: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
    let plane = h * w;
    let mut d_input = vec![0.0; c_in * plane];
    let mut d_kernels = vec![0.0; c_out * c_in * kh * kw];
    let mut d_bias = vec![0.0; c_out];
    for co in 0..c_out {
        let d_oplane = &d_out[co * plane..(co + 1) * plane];
        d_bias[co] = d_oplane.iter().sum();
        for ci in 0..c_in {
            let iplane = &input[ci * plane..(ci + 1) * plane];
            let d_iplane_base = ci * plane;
            let kbase = (co * c_in + ci) * kh * kw;
            for ky in 0..kh {
                let dy = ky as isize - pt as isize;
                let (oy0, oy1) = tap_range(dy, h);
                for kx in 0..kw {
                    let dx = kx as isize - pl as isize;
                    let (ox0, ox1) = tap_range(dx, w);
                    if ox0 >= ox1 {
                        continue;
                    }
                    let k = kernels[kbase + ky * kw + kx];
                    let mut dk = 0.0;
                    for oy in oy0..oy1 {
                        let iy = (oy as isize + dy) as usize;
                        let ix0 = (ox0 as isize + dx) as usize;
                        let d_orow = &d_oplane[oy * w + ox0..oy * w + ox1];
                        let ir = iy * w + ix0;
                        let irow = &iplane[ir..ir + (ox1 - ox0)];
                        for (g, i) in d_orow.iter().zip(irow) {
                            dk += g * i;
                        }
                        if want_input {
                            let d_irow = &mut d_input
                                [d_iplane_base + ir..d_iplane_base + ir + (ox1 - ox0)];
                            for (di, g) in d_irow.iter_mut().zip(d_orow) {
                                *di += k * g;
                            }
                        }
                    }
                    d_kernels[kbase + ky * kw + kx] += dk;
                }
            }
        }
    }
    (d_input, d_kernels, d_bias)
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn relu_backward(d_out: &[f64], input: &[f64]) -> Vec<f64> {
    d_out.iter().zip(input).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }).collect()
}

/// Numerically stable elementwise sigmoid.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

pub fn sigmoid_backward(d_out: &[f64], output: &[f64]) -> Vec<f64> {
    d_out.iter().zip(output).map(|(&g, &s)| g * s * (1.0 - s)).collect()
}

/// Mean binary cross entropy with the predictions clipped into
/// `[BCE_CLIP_EPS, 1 - BCE_CLIP_EPS]` before the logs.
pub fn bce(prediction: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(prediction.len(), target.len());
    let n = prediction.len() as f64;
    let mut total = 0.0;
    for (&p, &t) in prediction.iter().zip(target) {
        let pc = p.clamp(BCE_CLIP_EPS, 1.0 - BCE_CLIP_EPS);
        total -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
    }
    total / n
}

/// Gradient of [`bce`] w.r.t. the prediction. Zero where the clip binds.
pub fn bce_backward(d_out: f64, prediction: &[f64], target: &[f64]) -> Vec<f64> {
    let n = prediction.len() as f64;
    prediction
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            if p > BCE_CLIP_EPS && p < 1.0 - BCE_CLIP_EPS {
                d_out * ((1.0 - t) / (1.0 - p) - t / p) / n
            } else {
                0.0
            }
        })
        .collect()
}
