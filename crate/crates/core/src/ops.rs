//! Forward and adjoint kernels for the layer types the executable networks use.
//!
//! Every kernel accepts an optional leading batch axis. Backward kernels return
//! plain adjoints (sums over the batch); averaging over the batch happens once,
//! in [`softmax_cross_entropy`], which reports the mean loss.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TILE: usize = 256;

/// `y += a·x`.
#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Dot product with four interleaved partial sums so the loop vectorizes.
#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let xc = x.chunks_exact(4);
    let yc = y.chunks_exact(4);
    let tail: f64 = xc
        .remainder()
        .iter()
        .zip(yc.remainder())
        .map(|(a, b)| a * b)
        .sum();
    for (a, b) in xc.zip(yc) {
        for i in 0..4 {
            acc[i] += a[i] * b[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Splits `shape` into (batch, batched?) for an op whose unbatched rank is `rank`.
fn batch_of(op: &'static str, shape: &[usize], rank: usize) -> Result<(usize, bool)> {
    if shape.len() == rank {
        Ok((1, false))
    } else if shape.len() == rank + 1 {
        Ok((shape[0], true))
    } else {
        Err(Error::Dimension {
            op,
            lhs: shape.to_vec(),
            rhs: vec![rank],
        })
    }
}

fn with_batch(batched: bool, batch: usize, inner: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(inner.len() + 1);
    if batched {
        s.push(batch);
    }
    s.extend_from_slice(inner);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    fn resolve(
        input: &[usize],
        weights: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<(Self, usize, bool)> {
        let mismatch = || Error::Dimension {
            op: "conv2d",
            lhs: input.to_vec(),
            rhs: weights.to_vec(),
        };
        let (batch, batched) = batch_of("conv2d", input, 3)?;
        if weights.len() != 4 || weights[2] != weights[3] || stride == 0 {
            return Err(mismatch());
        }
        let inner = &input[input.len() - 3..];
        let (m, h, w) = (inner[0], inner[1], inner[2]);
        let (n, wm, s) = (weights[0], weights[1], weights[2]);
        if m != wm || h + 2 * padding < s || w + 2 * padding < s {
            return Err(mismatch());
        }
        let geom = Self {
            in_channels: m,
            out_channels: n,
            kernel: s,
            stride,
            padding,
            in_h: h,
            in_w: w,
            out_h: (h + 2 * padding - s) / stride + 1,
            out_w: (w + 2 * padding - s) / stride + 1,
        };
        Ok((geom, batch, batched))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Unfolds `input` ([batch, m, h, w]) into columns laid out as
    /// [m·s·s, batch·h'·w'].
    fn im2col(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let plane = self.out_plane();
        let width = batch * plane;
        let in_plane = self.in_h * self.in_w;
        let mut cols = vec![0.0; self.patch_len() * width];
        for c in 0..self.in_channels {
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let k = (c * self.kernel + ky) * self.kernel + kx;
                    let row = &mut cols[k * width..(k + 1) * width];
                    for b in 0..batch {
                        let src = &input[(b * self.in_channels + c) * in_plane..][..in_plane];
                        for oy in 0..self.out_h {
                            let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                            if iy < 0 || iy >= self.in_h as isize {
                                continue;
                            }
                            let dst = &mut row[b * plane + oy * self.out_w..][..self.out_w];
                            let src_row = &src[iy as usize * self.in_w..][..self.in_w];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                                if ix >= 0 && ix < self.in_w as isize {
                                    *d = src_row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Self::im2col`]: folds column gradients back onto the input.
    fn col2im(&self, cols: &[f64], batch: usize) -> Vec<f64> {
        let plane = self.out_plane();
        let width = batch * plane;
        let in_plane = self.in_h * self.in_w;
        let mut out = vec![0.0; batch * self.in_channels * in_plane];
        for c in 0..self.in_channels {
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let k = (c * self.kernel + ky) * self.kernel + kx;
                    let row = &cols[k * width..(k + 1) * width];
                    for b in 0..batch {
                        let dst = &mut out[(b * self.in_channels + c) * in_plane..][..in_plane];
                        for oy in 0..self.out_h {
                            let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                            if iy < 0 || iy >= self.in_h as isize {
                                continue;
                            }
                            let src = &row[b * plane + oy * self.out_w..][..self.out_w];
                            let dst_row = &mut dst[iy as usize * self.in_w..][..self.in_w];
                            for (ox, g) in src.iter().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                                if ix >= 0 && ix < self.in_w as isize {
                                    dst_row[ix as usize] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Cross-correlation of `input` ([m,h,w] or [B,m,h,w]) with `weights` ([n,m,s,s]).
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (g, batch, batched) = ConvGeometry::resolve(input.shape(), weights.shape(), stride, padding)?;
    let cols = g.im2col(input.data(), batch);
    let plane = g.out_plane();
    let width = batch * plane;
    let k_len = g.patch_len();
    let w = weights.data();

    // Column tiles keep the accumulator and the touched slice of `cols` in cache.
    let mut tmp = vec![0.0; g.out_channels * width];
    for start in (0..width).step_by(TILE) {
        let end = (start + TILE).min(width);
        for o in 0..g.out_channels {
            let acc = &mut tmp[o * width + start..o * width + end];
            for (k, &wk) in w[o * k_len..(o + 1) * k_len].iter().enumerate() {
                if wk != 0.0 {
                    axpy(wk, &cols[k * width + start..k * width + end], acc);
                }
            }
        }
    }
    let mut out = vec![0.0; batch * g.out_channels * plane];
    for o in 0..g.out_channels {
        for b in 0..batch {
            out[(b * g.out_channels + o) * plane..][..plane]
                .copy_from_slice(&tmp[o * width + b * plane..][..plane]);
        }
    }
    Tensor::from_vec(
        &with_batch(batched, batch, &[g.out_channels, g.out_h, g.out_w]),
        out,
    )
}

/// Adjoints of [`conv2d_forward`] with respect to its input and weights.
pub fn conv2d_backward(
    output_grad: &Tensor,
    saved_input: &Tensor,
    weights: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor)> {
    let (g, batch, batched) =
        ConvGeometry::resolve(saved_input.shape(), weights.shape(), stride, padding)?;
    output_grad.expect_shape(
        "conv2d_backward",
        &with_batch(batched, batch, &[g.out_channels, g.out_h, g.out_w]),
    )?;
    let cols = g.im2col(saved_input.data(), batch);
    let plane = g.out_plane();
    let width = batch * plane;
    let k_len = g.patch_len();
    let w = weights.data();

    // Output gradient regrouped as [n, batch·plane].
    let mut go = vec![0.0; g.out_channels * width];
    for b in 0..batch {
        for o in 0..g.out_channels {
            go[o * width + b * plane..][..plane]
                .copy_from_slice(&output_grad.data()[(b * g.out_channels + o) * plane..][..plane]);
        }
    }

    let mut weight_grad = vec![0.0; g.out_channels * k_len];
    let mut col_grad = vec![0.0; k_len * width];
    for o in 0..g.out_channels {
        let go_row = &go[o * width..(o + 1) * width];
        for k in 0..k_len {
            weight_grad[o * k_len + k] = dot(go_row, &cols[k * width..(k + 1) * width]);
        }
    }
    for start in (0..width).step_by(TILE) {
        let end = (start + TILE).min(width);
        for k in 0..k_len {
            let dst = &mut col_grad[k * width + start..k * width + end];
            for o in 0..g.out_channels {
                let wk = w[o * k_len + k];
                if wk != 0.0 {
                    axpy(wk, &go[o * width + start..o * width + end], dst);
                }
            }
        }
    }
    let input_grad = g.col2im(&col_grad, batch);
    Ok((
        Tensor::from_vec(saved_input.shape(), input_grad)?,
        Tensor::from_vec(weights.shape(), weight_grad)?,
    ))
}

/// `y = x·Wᵀ + b` for `x` of shape [in] or [B,in], `W` of shape [out,in].
pub fn linear_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (batch, batched) = batch_of("linear", input.shape(), 1)?;
    let (out_f, in_f) = linear_dims(input, weight, bias)?;
    let x = input.data();
    let w = weight.data();
    let mut y = vec![0.0; batch * out_f];
    for b in 0..batch {
        let xb = &x[b * in_f..(b + 1) * in_f];
        for o in 0..out_f {
            let dot: f64 = w[o * in_f..(o + 1) * in_f]
                .iter()
                .zip(xb)
                .map(|(a, c)| a * c)
                .sum();
            y[b * out_f + o] = dot + bias.data()[o];
        }
    }
    Tensor::from_vec(&with_batch(batched, batch, &[out_f]), y)
}

/// Returns (input_grad, weight_grad, bias_grad).
pub fn linear_backward(
    output_grad: &Tensor,
    saved_input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, batched) = batch_of("linear_backward", saved_input.shape(), 1)?;
    let (out_f, in_f) = linear_dims(saved_input, weight, bias)?;
    output_grad.expect_shape("linear_backward", &with_batch(batched, batch, &[out_f]))?;
    let x = saved_input.data();
    let w = weight.data();
    let g = output_grad.data();
    let mut gx = vec![0.0; batch * in_f];
    let mut gw = vec![0.0; out_f * in_f];
    let mut gb = vec![0.0; out_f];
    for b in 0..batch {
        let xb = &x[b * in_f..(b + 1) * in_f];
        let gxb = &mut gx[b * in_f..(b + 1) * in_f];
        for o in 0..out_f {
            let go = g[b * out_f + o];
            gb[o] += go;
            let w_row = &w[o * in_f..(o + 1) * in_f];
            let gw_row = &mut gw[o * in_f..(o + 1) * in_f];
            for i in 0..in_f {
                gw_row[i] += go * xb[i];
                gxb[i] += go * w_row[i];
            }
        }
    }
    Ok((
        Tensor::from_vec(saved_input.shape(), gx)?,
        Tensor::from_vec(weight.shape(), gw)?,
        Tensor::from_vec(bias.shape(), gb)?,
    ))
}

fn linear_dims(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    let ws = weight.shape();
    let in_f = *input.shape().last().unwrap_or(&0);
    if ws.len() != 2 || ws[1] != in_f || bias.shape() != [ws[0]] {
        return Err(Error::Dimension {
            op: "linear",
            lhs: input.shape().to_vec(),
            rhs: ws.to_vec(),
        });
    }
    Ok((ws[0], in_f))
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Subgradient 0 at the kink.
pub fn relu_backward(output_grad: &Tensor, saved_input: &Tensor) -> Result<Tensor> {
    output_grad.expect_shape("relu_backward", saved_input.shape())?;
    let data = output_grad
        .data()
        .iter()
        .zip(saved_input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(saved_input.shape(), data)
}

fn pool_dims(input: &[usize], kernel: usize) -> Result<(usize, bool, [usize; 3], usize, usize)> {
    let (batch, batched) = batch_of("avgpool2d", input, 3)?;
    let inner = &input[input.len() - 3..];
    if kernel == 0 || inner[1] < kernel || inner[2] < kernel {
        return Err(Error::Dimension {
            op: "avgpool2d",
            lhs: input.to_vec(),
            rhs: vec![kernel, kernel],
        });
    }
    Ok((
        batch,
        batched,
        [inner[0], inner[1], inner[2]],
        inner[1] / kernel,
        inner[2] / kernel,
    ))
}

/// Non-overlapping average pooling (stride equals kernel; ragged edges dropped).
pub fn avgpool2d_forward(input: &Tensor, kernel: usize) -> Result<Tensor> {
    let (batch, batched, [c, h, w], oh, ow) = pool_dims(input.shape(), kernel)?;
    let x = input.data();
    let scale = 1.0 / (kernel * kernel) as f64;
    let mut out = vec![0.0; batch * c * oh * ow];
    for bc in 0..batch * c {
        let src = &x[bc * h * w..(bc + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        s += src[(oy * kernel + ky) * w + ox * kernel + kx];
                    }
                }
                out[(bc * oh + oy) * ow + ox] = s * scale;
            }
        }
    }
    Tensor::from_vec(&with_batch(batched, batch, &[c, oh, ow]), out)
}

pub fn avgpool2d_backward(output_grad: &Tensor, saved_input: &Tensor, kernel: usize) -> Result<Tensor> {
    let (batch, batched, [c, h, w], oh, ow) = pool_dims(saved_input.shape(), kernel)?;
    output_grad.expect_shape("avgpool2d_backward", &with_batch(batched, batch, &[c, oh, ow]))?;
    let g = output_grad.data();
    let scale = 1.0 / (kernel * kernel) as f64;
    let mut gx = vec![0.0; saved_input.len()];
    for bc in 0..batch * c {
        let dst = &mut gx[bc * h * w..(bc + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let v = g[(bc * oh + oy) * ow + ox] * scale;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        dst[(oy * kernel + ky) * w + ox * kernel + kx] += v;
                    }
                }
            }
        }
    }
    Tensor::from_vec(saved_input.shape(), gx)
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (batch, _) = batch_of("softmax_cross_entropy", logits.shape(), 1)?;
    let classes = *logits.shape().last().unwrap_or(&0);
    if labels.len() != batch {
        return Err(Error::Dimension {
            op: "softmax_cross_entropy",
            lhs: logits.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    let z = logits.data();
    let inv_batch = 1.0 / batch as f64;
    let mut grad = vec![0.0; z.len()];
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let row = &z[b * classes..(b + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - row[label];
        for (c, g) in grad[b * classes..(b + 1) * classes].iter_mut().enumerate() {
            let p = (row[c] - log_sum).exp();
            *g = (p - if c == label { 1.0 } else { 0.0 }) * inv_batch;
        }
    }
    Ok((loss * inv_batch, Tensor::from_vec(logits.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct six-loop cross-correlation, independent of the im2col path.
    fn naive_conv(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
        let (m, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (n, s) = (w.shape()[0], w.shape()[2]);
        let oh = (h + 2 * pad - s) / stride + 1;
        let ow = (wd + 2 * pad - s) / stride + 1;
        let mut out = vec![0.0; n * oh * ow];
        for o in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..m {
                        for ky in 0..s {
                            for kx in 0..s {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w.data()[((o * m + c) * s + ky) * s + kx]
                                    * x.data()[(c * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_of_zero_input_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random(&[4, 3, 3, 3], &mut rng);
        let y = conv2d_forward(&Tensor::zeros(&[3, 8, 8]), &w, 1, 1).unwrap();
        assert_eq!(y.shape(), &[4, 8, 8]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_sum_of_ones() {
        let y = conv2d_forward(
            &Tensor::filled(&[1, 3, 3], 1.0),
            &Tensor::filled(&[1, 1, 3, 3], 1.0),
            1,
            0,
        )
        .unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, h, n, s, stride, pad) in &[
            (2, 5, 3, 3, 1, 1),
            (3, 7, 2, 3, 2, 1),
            (1, 6, 4, 1, 1, 0),
            (2, 8, 2, 3, 2, 0),
        ] {
            let x = random(&[m, h, h], &mut rng);
            let w = random(&[n, m, s, s], &mut rng);
            let y = conv2d_forward(&x, &w, stride, pad).unwrap();
            for (a, b) in y.data().iter().zip(naive_conv(&x, &w, stride, pad)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let err = conv2d_forward(&Tensor::zeros(&[2, 4, 4]), &Tensor::zeros(&[1, 3, 3, 3]), 1, 1)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
    }

    #[test]
    fn conv_backward_of_zero_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[2, 4, 4], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let (gx, gw) = conv2d_backward(&Tensor::zeros(&[3, 4, 4]), &x, &w, 1, 1).unwrap();
        assert!(gx.data().iter().chain(gw.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn conv_backward_one_by_one_is_matrix_adjoint() {
        // 1×1 spatial input and kernel: y = W x, so dW = g xᵀ and dx = Wᵀ g.
        let x = Tensor::from_vec(&[2, 1, 1], vec![1.5, -2.0]).unwrap();
        let w = Tensor::from_vec(&[3, 2, 1, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let g = Tensor::from_vec(&[3, 1, 1], vec![1.0, -1.0, 0.5]).unwrap();
        let (gx, gw) = conv2d_backward(&g, &x, &w, 1, 0).unwrap();
        assert_eq!(gw.data(), &[1.5, -2.0, -1.5, 2.0, 0.75, -1.0]);
        assert_eq!(gx.data(), &[1.0 - 3.0 + 2.5, 2.0 - 4.0 + 3.0]);
    }

    #[test]
    fn batched_conv_stacks_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&[2, 5, 5], &mut rng);
        let b = random(&[2, 5, 5], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let mut both = a.data().to_vec();
        both.extend_from_slice(b.data());
        let batch = Tensor::from_vec(&[2, 2, 5, 5], both).unwrap();
        let y = conv2d_forward(&batch, &w, 1, 1).unwrap();
        let ya = conv2d_forward(&a, &w, 1, 1).unwrap();
        let yb = conv2d_forward(&b, &w, 1, 1).unwrap();
        assert_eq!(&y.data()[..75], ya.data());
        assert_eq!(&y.data()[75..], yb.data());
    }

    #[test]
    fn relu_clamps_negatives() {
        let y = relu_forward(&Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let (loss, grad) = softmax_cross_entropy(&Tensor::filled(&[1, 10], 0.3), &[4]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((loss - 2.302585).abs() < 1e-6);
        assert!((grad.data()[4] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let err = softmax_cross_entropy(&Tensor::zeros(&[2, 3]), &[0, 3]).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 3, classes: 3 }));
    }

    #[test]
    fn avgpool_averages_blocks() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let y = avgpool2d_forward(&x, 2).unwrap();
        assert_eq!(y.data(), &[3.0]);
        let gx = avgpool2d_backward(&Tensor::from_vec(&[1, 1, 1], vec![4.0]).unwrap(), &x, 2).unwrap();
        assert_eq!(gx.data(), &[1.0; 4]);
    }

    #[test]
    fn linear_shape_mismatch() {
        let err = linear_forward(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[4, 5]), &Tensor::zeros(&[4]));
        assert!(err.is_err());
    }
}
