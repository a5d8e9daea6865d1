//! Forward/backward kernels for each layer kind. Plain loops over row-major
//! buffers; the reference path is sequential and deterministic.
//!
//! Backward kernels follow one convention: given dL/d(output) they return
//! dL/d(input) plus raw parameter gradients summed over the batch. The 1/B
//! scaling of the mean batch loss is applied once at the logits, so the
//! chain needs no further scaling.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.padding - self.kernel_w) / self.stride + 1
    }
}

/// True when the conv degenerates to a per-item matrix–vector product:
/// 1×1 input and output, with the kernel's center tap inside the padding.
fn pointwise(g: &ConvGeom) -> bool {
    g.in_h == 1
        && g.in_w == 1
        && g.out_h() == 1
        && g.out_w() == 1
        && g.padding < g.kernel_h
        && g.padding < g.kernel_w
}

/// Center-tap weights packed `[out_channels × in_channels]` contiguous.
fn pack_center_taps<F: Scalar>(w: &[F], g: &ConvGeom) -> Vec<F> {
    let k_sp = g.kernel_h * g.kernel_w;
    let center = g.padding * g.kernel_w + g.padding;
    let mut wc = Vec::with_capacity(g.out_channels * g.in_channels);
    for oc in 0..g.out_channels {
        for ic in 0..g.in_channels {
            wc.push(w[(oc * g.in_channels + ic) * k_sp + center]);
        }
    }
    wc
}

pub fn conv2d_forward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
    g: &ConvGeom,
) -> Tensor<F> {
    let b = input.shape()[0];
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = Tensor::zeros(&[b, g.out_channels, oh, ow]);

    let in_sp = g.in_h * g.in_w;
    let out_sp = oh * ow;
    let k_sp = g.kernel_h * g.kernel_w;
    let x = input.data();
    let w = weight.data();
    let bs = bias.data();
    let y = out.data_mut();

    if pointwise(g) {
        // A conv over 1×1 spatial input touches only the center tap, so it
        // is a plain matrix–vector product per item. Packing the center
        // taps makes both factors contiguous. Accumulation order per
        // output (bias, then ascending ic) matches the general path.
        let wc = pack_center_taps(w, g);
        for bi in 0..b {
            let x_row = &x[bi * g.in_channels..(bi + 1) * g.in_channels];
            let y_row = &mut y[bi * g.out_channels..(bi + 1) * g.out_channels];
            for oc in 0..g.out_channels {
                let w_row = &wc[oc * g.in_channels..(oc + 1) * g.in_channels];
                let mut acc = bs[oc];
                for i in 0..g.in_channels {
                    acc = acc + x_row[i] * w_row[i];
                }
                y_row[oc] = acc;
            }
        }
        return out;
    }

    if g.stride == 1 {
        // The valid tap window depends only on the output position, so
        // clamp it once per (oy, ox) and keep the channel loop branch-free.
        // Per-element term order (ic, then ky, then kx ascending over the
        // valid window) matches the general path exactly.
        for bi in 0..b {
            let in_base_b = bi * g.in_channels * in_sp;
            let out_base_b = bi * g.out_channels * out_sp;
            for oc in 0..g.out_channels {
                let out_base = out_base_b + oc * out_sp;
                let w_base_oc = oc * g.in_channels * k_sp;
                for oy in 0..oh {
                    let ky_lo = g.padding.saturating_sub(oy);
                    let ky_hi = (g.in_h + g.padding).saturating_sub(oy).min(g.kernel_h);
                    for ox in 0..ow {
                        let kx_lo = g.padding.saturating_sub(ox);
                        let kx_hi = (g.in_w + g.padding).saturating_sub(ox).min(g.kernel_w);
                        let nx = kx_hi.saturating_sub(kx_lo);
                        let mut acc = bs[oc];
                        if nx == 0 || ky_hi <= ky_lo {
                            y[out_base + oy * ow + ox] = acc;
                            continue;
                        }
                        for ic in 0..g.in_channels {
                            let w_base = w_base_oc + ic * k_sp;
                            let in_base = in_base_b + ic * in_sp;
                            for ky in ky_lo..ky_hi {
                                let row = in_base + (oy + ky - g.padding) * g.in_w + ox + kx_lo
                                    - g.padding;
                                let w_row = w_base + ky * g.kernel_w + kx_lo;
                                let xs = &x[row..row + nx];
                                let ws = &w[w_row..w_row + nx];
                                for i in 0..nx {
                                    acc = acc + xs[i] * ws[i];
                                }
                            }
                        }
                        y[out_base + oy * ow + ox] = acc;
                    }
                }
            }
        }
        return out;
    }

    for bi in 0..b {
        let in_base_b = bi * g.in_channels * in_sp;
        let out_base_b = bi * g.out_channels * out_sp;
        for oc in 0..g.out_channels {
            let out_base = out_base_b + oc * out_sp;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bs[oc];
                    for ic in 0..g.in_channels {
                        let w_base = (oc * g.in_channels + ic) * k_sp;
                        let in_base = in_base_b + ic * in_sp;
                        for ky in 0..g.kernel_h {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            if iy < 0 || iy >= g.in_h as isize {
                                continue;
                            }
                            let row = in_base + iy as usize * g.in_w;
                            let w_row = w_base + ky * g.kernel_w;
                            for kx in 0..g.kernel_w {
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if ix < 0 || ix >= g.in_w as isize {
                                    continue;
                                }
                                acc = acc + x[row + ix as usize] * w[w_row + kx];
                            }
                        }
                    }
                    y[out_base + oy * ow + ox] = acc;
                }
            }
        }
    }
    out
}

pub fn conv2d_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    grad_out: &Tensor<F>,
    g: &ConvGeom,
) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let b = input.shape()[0];
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_w = Tensor::zeros(weight.shape());
    let mut grad_b = Tensor::zeros(&[g.out_channels]);

    let in_sp = g.in_h * g.in_w;
    let out_sp = oh * ow;
    let k_sp = g.kernel_h * g.kernel_w;
    let x = input.data();
    let w = weight.data();
    let go = grad_out.data();
    let gi = grad_in.data_mut();
    let gw = grad_w.data_mut();
    let gb = grad_b.data_mut();

    if pointwise(g) {
        let wc = pack_center_taps(w, g);
        let center = g.padding * g.kernel_w + g.padding;
        for bi in 0..b {
            let x_row = &x[bi * g.in_channels..(bi + 1) * g.in_channels];
            let go_row = &go[bi * g.out_channels..(bi + 1) * g.out_channels];
            let gi_row = &mut gi[bi * g.in_channels..(bi + 1) * g.in_channels];
            for oc in 0..g.out_channels {
                let gval = go_row[oc];
                gb[oc] += gval;
                let w_row = &wc[oc * g.in_channels..(oc + 1) * g.in_channels];
                for ic in 0..g.in_channels {
                    gw[(oc * g.in_channels + ic) * k_sp + center] += gval * x_row[ic];
                    gi_row[ic] = gi_row[ic] + gval * w_row[ic];
                }
            }
        }
        return (grad_in, grad_w, grad_b);
    }

    if g.stride == 1 {
        // Same hoisted tap bounds as the forward pass; the (bi, oc, oy, ox,
        // ic, ky, kx) accumulation order is unchanged.
        for bi in 0..b {
            let in_base_b = bi * g.in_channels * in_sp;
            let out_base_b = bi * g.out_channels * out_sp;
            for oc in 0..g.out_channels {
                let out_base = out_base_b + oc * out_sp;
                let w_base_oc = oc * g.in_channels * k_sp;
                for oy in 0..oh {
                    let ky_lo = g.padding.saturating_sub(oy);
                    let ky_hi = (g.in_h + g.padding).saturating_sub(oy).min(g.kernel_h);
                    for ox in 0..ow {
                        let kx_lo = g.padding.saturating_sub(ox);
                        let kx_hi = (g.in_w + g.padding).saturating_sub(ox).min(g.kernel_w);
                        let nx = kx_hi.saturating_sub(kx_lo);
                        let gval = go[out_base + oy * ow + ox];
                        gb[oc] += gval;
                        if nx == 0 || ky_hi <= ky_lo {
                            continue;
                        }
                        for ic in 0..g.in_channels {
                            let w_base = w_base_oc + ic * k_sp;
                            let in_base = in_base_b + ic * in_sp;
                            for ky in ky_lo..ky_hi {
                                let row = in_base + (oy + ky - g.padding) * g.in_w + ox + kx_lo
                                    - g.padding;
                                let w_row = w_base + ky * g.kernel_w + kx_lo;
                                let gws = &mut gw[w_row..w_row + nx];
                                let gis = &mut gi[row..row + nx];
                                let xs = &x[row..row + nx];
                                let ws = &w[w_row..w_row + nx];
                                for i in 0..nx {
                                    gws[i] += gval * xs[i];
                                    gis[i] += gval * ws[i];
                                }
                            }
                        }
                    }
                }
            }
        }
        return (grad_in, grad_w, grad_b);
    }

    for bi in 0..b {
        let in_base_b = bi * g.in_channels * in_sp;
        let out_base_b = bi * g.out_channels * out_sp;
        for oc in 0..g.out_channels {
            let out_base = out_base_b + oc * out_sp;
            for oy in 0..oh {
                for ox in 0..ow {
                    let gval = go[out_base + oy * ow + ox];
                    gb[oc] += gval;
                    for ic in 0..g.in_channels {
                        let w_base = (oc * g.in_channels + ic) * k_sp;
                        let in_base = in_base_b + ic * in_sp;
                        for ky in 0..g.kernel_h {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            if iy < 0 || iy >= g.in_h as isize {
                                continue;
                            }
                            let row = in_base + iy as usize * g.in_w;
                            let w_row = w_base + ky * g.kernel_w;
                            for kx in 0..g.kernel_w {
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if ix < 0 || ix >= g.in_w as isize {
                                    continue;
                                }
                                gw[w_row + kx] += gval * x[row + ix as usize];
                                gi[row + ix as usize] += gval * w[w_row + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    (grad_in, grad_w, grad_b)
}

// ---------------------------------------------------------------------------
// batchnorm (spatial, per channel over B*H*W)
// ---------------------------------------------------------------------------

/// Per-channel mean and biased variance of a `[B, C, H, W]` batch.
pub fn batch_stats<F: Scalar>(input: &Tensor<F>) -> (Vec<F>, Vec<F>) {
    let s = input.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let sp = h * w;
    let n = F::from_usize_lossy(b * sp);
    let x = input.data();

    let mut mean = vec![F::zero(); c];
    let mut var = vec![F::zero(); c];
    for ci in 0..c {
        let mut sum = F::zero();
        for bi in 0..b {
            let base = (bi * c + ci) * sp;
            for i in 0..sp {
                sum += x[base + i];
            }
        }
        mean[ci] = sum / n;
    }
    for ci in 0..c {
        let m = mean[ci];
        let mut sum = F::zero();
        for bi in 0..b {
            let base = (bi * c + ci) * sp;
            for i in 0..sp {
                let d = x[base + i] - m;
                sum += d * d;
            }
        }
        var[ci] = sum / n;
    }
    (mean, var)
}

/// Normalizes with the given statistics: `y = gamma * (x - mean)/sqrt(var+eps) + beta`.
pub fn batchnorm_forward<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    mean: &[F],
    var: &[F],
    epsilon: F,
) -> Tensor<F> {
    let s = input.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let sp = h * w;
    let x = input.data();
    let gm = gamma.data();
    let bt = beta.data();
    let mut out = Tensor::zeros(s);
    let y = out.data_mut();

    for ci in 0..c {
        let inv_std = F::one() / (var[ci] + epsilon).sqrt();
        let g = gm[ci];
        let off = bt[ci];
        let m = mean[ci];
        for bi in 0..b {
            let base = (bi * c + ci) * sp;
            for i in 0..sp {
                y[base + i] = g * (x[base + i] - m) * inv_std + off;
            }
        }
    }
    out
}

/// Backward through train-mode batchnorm, where mean/var are functions of
/// the batch itself.
pub fn batchnorm_backward_train<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    mean: &[F],
    var: &[F],
    epsilon: F,
    grad_out: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let s = input.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let sp = h * w;
    let n = F::from_usize_lossy(b * sp);
    let x = input.data();
    let gm = gamma.data();
    let go = grad_out.data();

    let mut grad_in = Tensor::zeros(s);
    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    let gi = grad_in.data_mut();
    let gg = grad_gamma.data_mut();
    let gb = grad_beta.data_mut();

    for ci in 0..c {
        let inv_std = F::one() / (var[ci] + epsilon).sqrt();
        let m = mean[ci];

        let mut sum_g = F::zero();
        let mut sum_gx = F::zero();
        for bi in 0..b {
            let base = (bi * c + ci) * sp;
            for i in 0..sp {
                let g = go[base + i];
                let xhat = (x[base + i] - m) * inv_std;
                sum_g += g;
                sum_gx += g * xhat;
            }
        }
        gb[ci] = sum_g;
        gg[ci] = sum_gx;

        let scale = gm[ci] * inv_std;
        let mean_g = sum_g / n;
        let mean_gx = sum_gx / n;
        for bi in 0..b {
            let base = (bi * c + ci) * sp;
            for i in 0..sp {
                let g = go[base + i];
                let xhat = (x[base + i] - m) * inv_std;
                gi[base + i] = scale * (g - mean_g - xhat * mean_gx);
            }
        }
    }
    (grad_in, grad_gamma, grad_beta)
}

/// Backward through eval-mode batchnorm: the statistics are constants, so
/// the layer is an affine map per channel.
pub fn batchnorm_backward_eval<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    mean: &[F],
    var: &[F],
    epsilon: F,
    grad_out: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let s = input.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let sp = h * w;
    let x = input.data();
    let gm = gamma.data();
    let go = grad_out.data();

    let mut grad_in = Tensor::zeros(s);
    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    let gi = grad_in.data_mut();
    let gg = grad_gamma.data_mut();
    let gb = grad_beta.data_mut();

    for ci in 0..c {
        let inv_std = F::one() / (var[ci] + epsilon).sqrt();
        let m = mean[ci];
        let scale = gm[ci] * inv_std;
        for bi in 0..b {
            let base = (bi * c + ci) * sp;
            for i in 0..sp {
                let g = go[base + i];
                gb[ci] += g;
                gg[ci] += g * (x[base + i] - m) * inv_std;
                gi[base + i] = g * scale;
            }
        }
    }
    (grad_in, grad_gamma, grad_beta)
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

pub fn relu_forward<F: Scalar>(input: &Tensor<F>) -> Tensor<F> {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    out
}

pub fn relu_backward<F: Scalar>(input: &Tensor<F>, grad_out: &Tensor<F>) -> Tensor<F> {
    let mut grad_in = grad_out.clone();
    for (g, x) in grad_in.data_mut().iter_mut().zip(input.data()) {
        if *x <= F::zero() {
            *g = F::zero();
        }
    }
    grad_in
}

// ---------------------------------------------------------------------------
// maxpool2d (no padding; trailing rows/cols that do not fill a window are dropped)
// ---------------------------------------------------------------------------

pub fn maxpool_out_dim(in_dim: usize, kernel: usize, stride: usize) -> usize {
    if in_dim < kernel {
        0
    } else {
        (in_dim - kernel) / stride + 1
    }
}

/// Returns the pooled tensor and, per output cell, the flat input index of
/// the max (first max wins on ties) for gradient routing.
pub fn maxpool_forward<F: Scalar>(
    input: &Tensor<F>,
    kernel: usize,
    stride: usize,
) -> (Tensor<F>, Vec<usize>) {
    let s = input.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let oh = maxpool_out_dim(h, kernel, stride);
    let ow = maxpool_out_dim(w, kernel, stride);
    let x = input.data();
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = vec![0usize; b * c * oh * ow];
    let y = out.data_mut();

    let in_sp = h * w;
    let out_sp = oh * ow;
    for bi in 0..b {
        for ci in 0..c {
            let in_base = (bi * c + ci) * in_sp;
            let out_base = (bi * c + ci) * out_sp;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = in_base + (oy * stride) * w + ox * stride;
                    let mut best = x[best_idx];
                    for ky in 0..kernel {
                        let row = in_base + (oy * stride + ky) * w;
                        for kx in 0..kernel {
                            let idx = row + ox * stride + kx;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let oi = out_base + oy * ow + ox;
                    y[oi] = best;
                    argmax[oi] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool_backward<F: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<F>,
) -> Tensor<F> {
    let mut grad_in = Tensor::zeros(input_shape);
    let gi = grad_in.data_mut();
    for (oi, g) in grad_out.data().iter().enumerate() {
        gi[argmax[oi]] += *g;
    }
    grad_in
}

// ---------------------------------------------------------------------------
// global average pool
// ---------------------------------------------------------------------------

pub fn gap_forward<F: Scalar>(input: &Tensor<F>) -> Tensor<F> {
    let s = input.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let sp = h * w;
    let inv = F::one() / F::from_usize_lossy(sp);
    let x = input.data();
    let mut out = Tensor::zeros(&[b, c]);
    let y = out.data_mut();
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * sp;
            let mut sum = F::zero();
            for i in 0..sp {
                sum += x[base + i];
            }
            y[bi * c + ci] = sum * inv;
        }
    }
    out
}

pub fn gap_backward<F: Scalar>(input_shape: &[usize], grad_out: &Tensor<F>) -> Tensor<F> {
    let (b, c, h, w) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let sp = h * w;
    let inv = F::one() / F::from_usize_lossy(sp);
    let go = grad_out.data();
    let mut grad_in = Tensor::zeros(input_shape);
    let gi = grad_in.data_mut();
    for bi in 0..b {
        for ci in 0..c {
            let g = go[bi * c + ci] * inv;
            let base = (bi * c + ci) * sp;
            for i in 0..sp {
                gi[base + i] = g;
            }
        }
    }
    grad_in
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

/// `y[b,o] = bias[o] + sum_i x[b,i] * w[o,i]`, input flattened to `[B, in]`.
pub fn dense_forward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
    in_features: usize,
    out_features: usize,
) -> Tensor<F> {
    let b = input.shape()[0];
    let x = input.data();
    let w = weight.data();
    let bs = bias.data();
    let mut out = Tensor::zeros(&[b, out_features]);
    let y = out.data_mut();
    for bi in 0..b {
        let in_base = bi * in_features;
        let out_base = bi * out_features;
        for o in 0..out_features {
            let w_base = o * in_features;
            let mut acc = bs[o];
            for i in 0..in_features {
                acc = acc + x[in_base + i] * w[w_base + i];
            }
            y[out_base + o] = acc;
        }
    }
    out
}

pub fn dense_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    grad_out: &Tensor<F>,
    in_features: usize,
    out_features: usize,
) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let b = input.shape()[0];
    let x = input.data();
    let w = weight.data();
    let go = grad_out.data();

    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_w = Tensor::zeros(weight.shape());
    let mut grad_b = Tensor::zeros(&[out_features]);
    let gi = grad_in.data_mut();
    let gw = grad_w.data_mut();
    let gb = grad_b.data_mut();

    for bi in 0..b {
        let in_base = bi * in_features;
        let out_base = bi * out_features;
        for o in 0..out_features {
            let g = go[out_base + o];
            gb[o] += g;
            let w_base = o * in_features;
            for i in 0..in_features {
                gw[w_base + i] += g * x[in_base + i];
                gi[in_base + i] += g * w[w_base + i];
            }
        }
    }
    (grad_in, grad_w, grad_b)
}
