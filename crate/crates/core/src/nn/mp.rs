//! Magnitude-preserving primitives: for inputs whose entries have unit
//! second moment, each operation returns entries with unit second moment.

use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use crate::{Error, Result, Tensor};

/// RMS of `silu(z)` for `z ~ N(0, 1)`.
pub const SILU_RMS: f64 = 0.596;

/// Exponential for the network hot paths: the platform's with `std`,
/// `libm` otherwise.
#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.exp()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::exp(x)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

#[inline]
pub fn mp_silu_scalar(x: f64) -> f64 {
    x * sigmoid(x) / SILU_RMS
}

#[inline]
pub(crate) fn mp_silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s)) / SILU_RMS
}

pub fn mp_silu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data.iter_mut().for_each(|v| *v = mp_silu_scalar(*v));
    out
}

/// Blend weights `(w_a, w_b)` of the magnitude-preserving sum.
#[inline]
pub fn mp_sum_weights(blend: f64) -> (f64, f64) {
    let norm = libm::sqrt((1.0 - blend) * (1.0 - blend) + blend * blend);
    ((1.0 - blend) / norm, blend / norm)
}

/// `((1 - blend) * a + blend * b) / sqrt((1 - blend)^2 + blend^2)`.
pub fn mp_sum(a: &Tensor, b: &Tensor, blend: f64) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(Error::arg("mp_sum operands differ in shape"));
    }
    let (wa, wb) = mp_sum_weights(blend);
    let mut out = a.clone();
    for (o, &bv) in out.data.iter_mut().zip(&b.data) {
        *o = wa * *o + wb * bv;
    }
    Ok(out)
}

/// Per-part scale factors of the magnitude-preserving concatenation of
/// `ca` and `cb` channels. An empty part leaves the other untouched.
pub fn mp_concat_weights(ca: usize, cb: usize, blend: f64) -> (f64, f64) {
    if cb == 0 {
        return (1.0, 0.0);
    }
    if ca == 0 {
        return (0.0, 1.0);
    }
    let c = libm::sqrt((ca + cb) as f64 / ((1.0 - blend) * (1.0 - blend) + blend * blend));
    (c / libm::sqrt(ca as f64) * (1.0 - blend), c / libm::sqrt(cb as f64) * blend)
}

/// Channel concatenation rescaled so unit-RMS parts give a unit-RMS result.
pub fn mp_concat(a: &Tensor, b: &Tensor, blend: f64) -> Result<Tensor> {
    if a.n != b.n || a.h != b.h || a.w != b.w {
        return Err(Error::arg("mp_concat operands differ in batch or spatial size"));
    }
    let (wa, wb) = mp_concat_weights(a.c, b.c, blend);
    Ok(Tensor::concat_channels(a, wa, b, wb))
}

/// Fixed random Fourier features of a scalar noise level:
/// `sqrt(2) * cos(2 pi (f_i a + phi_i))`.
pub fn mp_fourier_embed(a: f64, freqs: &[f64], phases: &[f64]) -> Vec<f64> {
    freqs
        .iter()
        .zip(phases)
        .map(|(&f, &phi)| SQRT_2 * libm::cos(2.0 * PI * (f * a + phi)))
        .collect()
}

/// Bias-free convolution with zero padding under forced weight
/// normalization: every output channel uses its kernel rescaled to norm one.
/// `weights` holds `cout` rows of `x.c * k * k` entries.
pub fn mp_conv2d(x: &Tensor, weights: &[f64], cout: usize, k: usize) -> Result<Tensor> {
    let fan_in = x.c * k * k;
    if k % 2 == 0 || weights.len() != cout * fan_in {
        return Err(Error::arg("kernel must be odd and weights must hold cout rows of cin*k*k"));
    }
    Ok(super::ops::conv2d(x, &effective_weight(weights, fan_in, 1.0), cout, k))
}

/// Rescales each length-`fan_in` row of `weights` to unit RMS in place.
pub fn normalize_rows(weights: &mut [f64], fan_in: usize) -> Result<()> {
    if fan_in == 0 || weights.len() % fan_in != 0 {
        return Err(Error::arg("weight length is not a multiple of fan-in"));
    }
    for row in weights.chunks_exact_mut(fan_in) {
        let rms = row_rms(row);
        if !(rms > 0.0) || !rms.is_finite() {
            return Err(Error::Degenerate("weight vector with zero or non-finite magnitude"));
        }
        row.iter_mut().for_each(|v| *v /= rms);
    }
    Ok(())
}

#[inline]
pub(crate) fn row_rms(row: &[f64]) -> f64 {
    libm::sqrt(row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64)
}

/// Effective kernel `gain / sqrt(fan_in) * w / rms(w)` applied per row.
pub(crate) fn effective_weight(raw: &[f64], fan_in: usize, gain: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(raw.len());
    let k = gain / libm::sqrt(fan_in as f64);
    for row in raw.chunks_exact(fan_in) {
        let rms = row_rms(row);
        let s = if rms > 0.0 { k / rms } else { 0.0 };
        w.extend(row.iter().map(|v| v * s));
    }
    w
}

/// Pulls a gradient on the effective kernel back to the raw weights and the
/// gain. Returns the gain gradient and accumulates into `draw`.
pub(crate) fn effective_weight_backward(
    raw: &[f64],
    fan_in: usize,
    gain: f64,
    deff: &[f64],
    draw: &mut [f64],
) -> f64 {
    let sf = libm::sqrt(fan_in as f64);
    let mut dgain = 0.0;
    for ((row, drow), grow) in raw
        .chunks_exact(fan_in)
        .zip(deff.chunks_exact(fan_in))
        .zip(draw.chunks_exact_mut(fan_in))
    {
        let rms = row_rms(row);
        if !(rms > 0.0) {
            continue;
        }
        // n = w / rms; eff = gain / sqrt(F) * n
        let mut dn_dot_n = 0.0;
        for (&w, &d) in row.iter().zip(drow) {
            let n = w / rms;
            dgain += d * n / sf;
            dn_dot_n += d * gain / sf * n;
        }
        for ((&w, &d), g) in row.iter().zip(drow).zip(grow.iter_mut()) {
            let n = w / rms;
            let dn = d * gain / sf;
            *g += (dn - n * dn_dot_n / fan_in as f64) / rms;
        }
    }
    dgain
}
