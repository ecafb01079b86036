//! Dense kernels and their adjoints: convolution, resampling, channel-wise
//! normalization and multi-head attention.

use alloc::vec;
use alloc::vec::Vec;

use crate::Tensor;

/// Strided matrix view: element `(i, j)` lives at `i * rs + j * cs`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }
}

/// `c = a * b + beta * c` with `a: m x k`, `b: k x n`, `c: m x n` row-major.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!((m - 1) * a.rs + (k - 1) * a.cs < a.data.len());
    assert!((k - 1) * b.rs + (n - 1) * b.cs < b.data.len());
    // SAFETY: the asserts above bound every index the kernel touches, and the
    // output slice is exclusively borrowed.
    #[allow(unsafe_code)]
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Lays out the `k x k` zero-padded neighborhoods of a channel-major
/// `[c, n, h, w]` stack as a `[c * k * k, n * h * w]` matrix.
fn im2col(x: &[f64], c: usize, n: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let r = k / 2;
    let p = h * w;
    let zeros = |cols: &mut Vec<f64>, len: usize| cols.extend(core::iter::repeat_n(0.0, len));
    let mut cols = Vec::with_capacity(c * k * k * n * p);
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                // valid destination columns [x_lo, x_hi) read source column x + kx - r
                let x_lo = r.saturating_sub(kx).min(w);
                let x_hi = (w + r).saturating_sub(kx).min(w).max(x_lo);
                for i in 0..n {
                    let plane = &x[(ci * n + i) * p..][..p];
                    for y in 0..h {
                        let sy = (y + ky).wrapping_sub(r);
                        if sy >= h || x_lo == x_hi {
                            zeros(&mut cols, w);
                            continue;
                        }
                        zeros(&mut cols, x_lo);
                        let src = &plane[sy * w..(sy + 1) * w];
                        cols.extend_from_slice(&src[x_lo + kx - r..x_hi + kx - r]);
                        zeros(&mut cols, w - x_hi);
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], c: usize, n: usize, h: usize, w: usize, k: usize, x: &mut [f64]) {
    let r = k / 2;
    let p = h * w;
    let row_len = n * p;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * row_len..][..row_len];
                let x_lo = r.saturating_sub(kx);
                let x_hi = (w + r).saturating_sub(kx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for i in 0..n {
                    let plane = &mut x[(ci * n + i) * p..][..p];
                    let src_plane = &row[i * p..(i + 1) * p];
                    for y in 0..h {
                        let sy = (y + ky).wrapping_sub(r);
                        if sy >= h {
                            continue;
                        }
                        let src = &src_plane[y * w + x_lo..y * w + x_hi];
                        let dst = &mut plane[sy * w + x_lo + kx - r..sy * w + x_hi + kx - r];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// Same-size convolution with an odd square kernel and zero padding, run as
/// one matrix product over the whole batch. `weight` is `[cout, cin * k * k]`.
pub(crate) fn conv2d(x: &Tensor, weight: &[f64], cout: usize, k: usize) -> Tensor {
    let cin = x.c;
    let cols_n = x.n * x.plane();
    let kk = cin * k * k;
    debug_assert_eq!(weight.len(), cout * kk);
    let mut out = Tensor::zeros(x.n, cout, x.h, x.w);
    if k == 1 {
        gemm(cout, kk, cols_n, View::rows(weight, kk), View::rows(&x.data, cols_n), 0.0, &mut out.data);
    } else {
        let cols = im2col(&x.data, cin, x.n, x.h, x.w, k);
        gemm(cout, kk, cols_n, View::rows(weight, kk), View::rows(&cols, cols_n), 0.0, &mut out.data);
    }
    out
}

/// Adjoint of [`conv2d`]: returns `(dx, dweight)`.
pub(crate) fn conv2d_backward(x: &Tensor, weight: &[f64], dout: &Tensor, k: usize) -> (Tensor, Vec<f64>) {
    let (cin, cout) = (x.c, dout.c);
    let cols_n = x.n * x.plane();
    let kk = cin * k * k;
    let mut dx = x.zeros_like();
    let mut dw = vec![0.0; cout * kk];
    if k == 1 {
        gemm(cout, cols_n, kk, View::rows(&dout.data, cols_n), View::transposed(&x.data, cols_n), 0.0, &mut dw);
        gemm(kk, cout, cols_n, View::transposed(weight, kk), View::rows(&dout.data, cols_n), 0.0, &mut dx.data);
    } else {
        let mut cols = im2col(&x.data, cin, x.n, x.h, x.w, k);
        gemm(cout, cols_n, kk, View::rows(&dout.data, cols_n), View::transposed(&cols, cols_n), 0.0, &mut dw);
        // reuse the column buffer for the input adjoint
        gemm(kk, cout, cols_n, View::transposed(weight, kk), View::rows(&dout.data, cols_n), 0.0, &mut cols);
        col2im(&cols, cin, x.n, x.h, x.w, k, &mut dx.data);
    }
    (dx, dw)
}

/// 2x2 average pooling.
pub(crate) fn avg_down(x: &Tensor) -> Tensor {
    let (h2, w2) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.n, x.c, h2, w2);
    for plane in 0..x.n * x.c {
        let src = &x.data[plane * x.plane()..(plane + 1) * x.plane()];
        let dst = &mut out.data[plane * h2 * w2..(plane + 1) * h2 * w2];
        for y in 0..h2 {
            for xx in 0..w2 {
                let s = src[2 * y * x.w + 2 * xx]
                    + src[2 * y * x.w + 2 * xx + 1]
                    + src[(2 * y + 1) * x.w + 2 * xx]
                    + src[(2 * y + 1) * x.w + 2 * xx + 1];
                dst[y * w2 + xx] = 0.25 * s;
            }
        }
    }
    out
}

pub(crate) fn avg_down_backward(dout: &Tensor) -> Tensor {
    let (h, w) = (dout.h * 2, dout.w * 2);
    let mut dx = Tensor::zeros(dout.n, dout.c, h, w);
    for plane in 0..dout.n * dout.c {
        let src = &dout.data[plane * dout.plane()..(plane + 1) * dout.plane()];
        let dst = &mut dx.data[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = 0.25 * src[(y / 2) * dout.w + x / 2];
            }
        }
    }
    dx
}

/// Nearest-neighbor 2x upsampling.
pub(crate) fn up_nearest(x: &Tensor) -> Tensor {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(x.n, x.c, h, w);
    for plane in 0..x.n * x.c {
        let src = &x.data[plane * x.plane()..(plane + 1) * x.plane()];
        let dst = &mut out.data[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            for xx in 0..w {
                dst[y * w + xx] = src[(y / 2) * x.w + xx / 2];
            }
        }
    }
    out
}

pub(crate) fn up_nearest_backward(dout: &Tensor) -> Tensor {
    let (h2, w2) = (dout.h / 2, dout.w / 2);
    let mut dx = Tensor::zeros(dout.n, dout.c, h2, w2);
    for plane in 0..dout.n * dout.c {
        let src = &dout.data[plane * dout.plane()..(plane + 1) * dout.plane()];
        let dst = &mut dx.data[plane * h2 * w2..(plane + 1) * h2 * w2];
        for y in 0..dout.h {
            for x in 0..dout.w {
                dst[(y / 2) * w2 + x / 2] += src[y * dout.w + x];
            }
        }
    }
    dx
}

pub(crate) const NORM_EPS: f64 = 1e-4;

/// Divides every strided vector `v[off + j * stride], j < d` by `eps + rms(v)`.
#[inline]
fn normalize_strided(data: &mut [f64], off: usize, stride: usize, d: usize) {
    let mut ss = 0.0;
    for j in 0..d {
        let v = data[off + j * stride];
        ss += v * v;
    }
    let inv = 1.0 / (NORM_EPS + libm::sqrt(ss / d as f64));
    for j in 0..d {
        data[off + j * stride] *= inv;
    }
}

/// Adjoint of [`normalize_strided`], reading the input `x` and writing `dx`.
#[inline]
fn normalize_strided_backward(
    x: &[f64],
    g: &[f64],
    dx: &mut [f64],
    off: usize,
    stride: usize,
    d: usize,
) {
    let mut ss = 0.0;
    let mut gx = 0.0;
    for j in 0..d {
        let v = x[off + j * stride];
        ss += v * v;
        gx += v * g[off + j * stride];
    }
    let r = libm::sqrt(ss / d as f64);
    let denom = NORM_EPS + r;
    let radial = if r > 0.0 { gx / (d as f64 * r * denom * denom) } else { 0.0 };
    for j in 0..d {
        let i = off + j * stride;
        dx[i] += g[i] / denom - x[i] * radial;
    }
}

/// Per-pixel normalization across channels to unit RMS.
pub(crate) fn pixel_norm(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let stride = x.n * x.plane();
    for off in 0..stride {
        normalize_strided(&mut out.data, off, stride, x.c);
    }
    out
}

pub(crate) fn pixel_norm_backward(x: &Tensor, dout: &Tensor) -> Tensor {
    let mut dx = x.zeros_like();
    let stride = x.n * x.plane();
    for off in 0..stride {
        normalize_strided_backward(&x.data, &dout.data, &mut dx.data, off, stride, x.c);
    }
    dx
}

/// Index of channel `(head, j, s)` in a fused `[heads * d * 3]` qkv layout,
/// with `s` selecting query, key or value.
#[inline]
fn qkv_channel(head: usize, d: usize, j: usize, s: usize) -> usize {
    (head * d + j) * 3 + s
}

/// Cosine-attention core: `qkv` is `[n, 3c, h, w]`; queries, keys and values are
/// normalized per head across the head dimension before scaled dot-product
/// attention over all pixels. Returns `[n, c, h, w]`.
pub(crate) fn attention(qkv: &Tensor, heads: usize) -> Tensor {
    attention_impl(qkv, heads, None).0
}

pub(crate) fn attention_backward(qkv: &Tensor, heads: usize, dout: &Tensor) -> Tensor {
    attention_impl(qkv, heads, Some(dout)).1.expect("gradient requested")
}

fn attention_impl(qkv: &Tensor, heads: usize, dout: Option<&Tensor>) -> (Tensor, Option<Tensor>) {
    let c = qkv.c / 3;
    let d = c / heads;
    let (n, p) = (qkv.n, qkv.plane());
    // consecutive head dimensions sit three channels apart
    let stride = 3 * n * p;
    let scale = 1.0 / libm::sqrt(d as f64);
    let mut normed = qkv.clone();
    for i in 0..n {
        for head in 0..heads {
            for s in 0..3 {
                for px in 0..p {
                    let off = (qkv_channel(head, d, 0, s) * n + i) * p + px;
                    normalize_strided(&mut normed.data, off, stride, d);
                }
            }
        }
    }
    let mut out = Tensor::zeros(qkv.n, c, qkv.h, qkv.w);
    let mut dnormed = dout.map(|_| qkv.zeros_like());
    let mut weights = vec![0.0; p * p];
    let mut dweights = vec![0.0; p * p];
    for i in 0..n {
        for head in 0..heads {
            let ch = |j: usize, s: usize| (qkv_channel(head, d, j, s) * n + i) * p;
            // logits and row-wise softmax
            for q in 0..p {
                let row = &mut weights[q * p..(q + 1) * p];
                row.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..d {
                    let qv = normed.data[ch(j, 0) + q] * scale;
                    let keys = &normed.data[ch(j, 1)..ch(j, 1) + p];
                    for (r, kv) in row.iter_mut().zip(keys) {
                        *r += qv * kv;
                    }
                }
                let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let mut z = 0.0;
                for r in row.iter_mut() {
                    *r = super::mp::exp(*r - m);
                    z += *r;
                }
                row.iter_mut().for_each(|r| *r /= z);
            }
            for j in 0..d {
                let vals = &normed.data[ch(j, 2)..ch(j, 2) + p];
                let dst = &mut out.data[((head * d + j) * n + i) * p..][..p];
                for (q, o) in dst.iter_mut().enumerate() {
                    *o = weights[q * p..(q + 1) * p].iter().zip(vals).map(|(a, b)| a * b).sum();
                }
            }
            let (Some(dout), Some(dn)) = (dout, dnormed.as_mut()) else {
                continue;
            };
            // dv[j, k] = sum_q w[q, k] dy[j, q]; dw[q, k] = sum_j dy[j, q] v[j, k]
            dweights.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..d {
                let dy = &dout.data[((head * d + j) * n + i) * p..][..p];
                let vals = &normed.data[ch(j, 2)..ch(j, 2) + p];
                for (q, &g) in dy.iter().enumerate() {
                    let wrow = &weights[q * p..(q + 1) * p];
                    let dvrow = &mut dn.data[ch(j, 2)..ch(j, 2) + p];
                    for (dv, w) in dvrow.iter_mut().zip(wrow) {
                        *dv += w * g;
                    }
                    for (dw, v) in dweights[q * p..(q + 1) * p].iter_mut().zip(vals) {
                        *dw += g * v;
                    }
                }
            }
            // softmax adjoint, then logits adjoint
            for q in 0..p {
                let wrow = &weights[q * p..(q + 1) * p];
                let drow = &mut dweights[q * p..(q + 1) * p];
                let dot: f64 = wrow.iter().zip(drow.iter()).map(|(a, b)| a * b).sum();
                for (dr, w) in drow.iter_mut().zip(wrow) {
                    *dr = w * (*dr - dot) * scale;
                }
            }
            for j in 0..d {
                for q in 0..p {
                    let drow = &dweights[q * p..(q + 1) * p];
                    let keys = &normed.data[ch(j, 1)..ch(j, 1) + p];
                    let dq: f64 = drow.iter().zip(keys).map(|(a, b)| a * b).sum();
                    dn.data[ch(j, 0) + q] += dq;
                    let qv = normed.data[ch(j, 0) + q];
                    for (dk, ds) in dn.data[ch(j, 1)..ch(j, 1) + p].iter_mut().zip(drow) {
                        *dk += ds * qv;
                    }
                }
            }
        }
    }
    let dqkv = dnormed.map(|dn| {
        let mut dx = qkv.zeros_like();
        for i in 0..n {
            for head in 0..heads {
                for s in 0..3 {
                    for px in 0..p {
                        let off = (qkv_channel(head, d, 0, s) * n + i) * p + px;
                        normalize_strided_backward(&qkv.data, &dn.data, &mut dx.data, off, stride, d);
                    }
                }
            }
        }
        dx
    });
    (out, dqkv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor, w: &[f64], cout: usize, k: usize) -> Tensor {
        let r = (k / 2) as isize;
        let mut out = Tensor::zeros(x.n, cout, x.h, x.w);
        for i in 0..x.n {
            for co in 0..cout {
                for y in 0..x.h {
                    for xx in 0..x.w {
                        let mut acc = 0.0;
                        for ci in 0..x.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - r;
                                    let sx = xx as isize + kx as isize - r;
                                    if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                        continue;
                                    }
                                    acc += w[co * x.c * k * k + (ci * k + ky) * k + kx]
                                        * x.data[((ci * x.n + i) * x.h + sy as usize) * x.w + sx as usize];
                                }
                            }
                        }
                        out.data[((co * x.n + i) * x.h + y) * x.w + xx] = acc;
                    }
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = crate::rng::mix64(s);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn conv_matches_direct_summation() {
        for &k in &[1usize, 3] {
            let x = Tensor::from_vec(2, 3, 5, 4, pseudo(120, 1)).unwrap();
            let w = pseudo(4 * 3 * k * k, 2);
            let fast = conv2d(&x, &w, 4, k);
            let slow = naive_conv(&x, &w, 4, k);
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_adjoint_identity() {
        // <conv(x), g> == <x, conv^T(g)> and matches the weight gradient
        let x = Tensor::from_vec(2, 3, 4, 6, pseudo(144, 3)).unwrap();
        let w = pseudo(5 * 27, 4);
        let g = Tensor::from_vec(2, 5, 4, 6, pseudo(240, 5)).unwrap();
        let y = conv2d(&x, &w, 5, 3);
        let (dx, dw) = conv2d_backward(&x, &w, &g, 3);
        let lhs: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        let rhs_w: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        assert!((lhs - rhs_w).abs() < 1e-10);
    }

    #[test]
    fn resampling_adjoints() {
        let x = Tensor::from_vec(1, 2, 4, 4, pseudo(32, 6)).unwrap();
        let g = Tensor::from_vec(1, 2, 2, 2, pseudo(8, 7)).unwrap();
        let lhs: f64 = avg_down(&x).data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&avg_down_backward(&g).data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        let lhs: f64 = up_nearest(&g).data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.data.iter().zip(&up_nearest_backward(&x).data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

