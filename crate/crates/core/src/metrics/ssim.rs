use alloc::vec::Vec;

use super::PEAK;
use crate::{Error, Image, Result};

/// Per-scale exponents of the five-scale structural similarity.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Side of the square Gaussian window.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: PEAK,
        }
    }
}

fn window_taps(p: &SsimParams) -> Vec<f64> {
    let c = (p.window as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..p.window)
        .map(|i| {
            let d = i as f64 - c;
            libm::exp(-d * d / (2.0 * p.sigma * p.sigma))
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable 'valid' filtering: output is `(w - k + 1) x (h - k + 1)`.
fn filter_valid(img: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = alloc::vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * img[y * w + x + i]).sum();
        }
    }
    let mut out = alloc::vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term over all window positions.
fn ssim_terms(y: &Image, yhat: &Image, p: &SsimParams) -> Result<(f64, f64)> {
    y.ensure_same_shape(yhat)?;
    let (w, h) = y.shape();
    if w < p.window || h < p.window {
        return Err(Error::arg(alloc::format!(
            "{w}x{h} image is smaller than the {}x{} window",
            p.window,
            p.window
        )));
    }
    let taps = window_taps(p);
    let a = y.data();
    let b = yhat.data();
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&u, &v)| f(u, v)).collect() };
    let mu_a = filter_valid(a, w, h, &taps);
    let mu_b = filter_valid(b, w, h, &taps);
    let aa = filter_valid(&prod(&|u, _| u * u), w, h, &taps);
    let bb = filter_valid(&prod(&|_, v| v * v), w, h, &taps);
    let ab = filter_valid(&prod(&|u, v| u * v), w, h, &taps);
    let c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
    let c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
    let (mut s_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let cs = (2.0 * cov + c2) / (va + vb + c2);
        let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        s_sum += l * cs;
        cs_sum += cs;
    }
    let n = mu_a.len() as f64;
    Ok((s_sum / n, cs_sum / n))
}

/// Mean structural similarity with unit component exponents (and
/// `C3 = C2 / 2`), clipped to `[0, 1]`.
pub fn ssim(y: &Image, yhat: &Image, params: &SsimParams) -> Result<f64> {
    Ok(ssim_terms(y, yhat, params)?.0.clamp(0.0, 1.0))
}

/// Largest scale count, at most five, for which the coarsest image still
/// spans `2^(scales-1)` windows; zero if even one scale does not fit.
pub fn ms_ssim_scales(width: usize, height: usize, window: usize) -> usize {
    let side = width.min(height);
    (1..=MS_SSIM_WEIGHTS.len()).rev().find(|&s| side >= (1 << (s - 1)) * window).unwrap_or(0)
}

fn downsample2(img: &Image) -> Image {
    let (w, h) = (img.width() / 2, img.height() / 2);
    Image::from_fn(w, h, |x, y| {
        0.25 * (img.get(2 * x, 2 * y) + img.get(2 * x + 1, 2 * y) + img.get(2 * x, 2 * y + 1) + img.get(2 * x + 1, 2 * y + 1))
    })
}

/// Multi-scale SSIM: contrast-structure at every scale but the coarsest,
/// full SSIM at the coarsest, each clipped at zero and raised to its weight.
/// Scales are dropped for small images and the remaining weights
/// renormalized to sum to one. Returns the value and the scale count used.
pub fn ms_ssim(y: &Image, yhat: &Image, params: &SsimParams) -> Result<(f64, usize)> {
    y.ensure_same_shape(yhat)?;
    let scales = ms_ssim_scales(y.width(), y.height(), params.window);
    if scales == 0 {
        return Err(Error::arg("image smaller than the SSIM window"));
    }
    let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let (mut a, mut b) = (y.clone(), yhat.clone());
    let mut value = 1.0;
    for (s, &wt) in MS_SSIM_WEIGHTS[..scales].iter().enumerate() {
        let (full, cs) = ssim_terms(&a, &b, params)?;
        let term = if s + 1 == scales { full } else { cs };
        value *= libm::pow(term.max(0.0), wt / total);
        if s + 1 < scales {
            a = downsample2(&a);
            b = downsample2(&b);
        }
    }
    Ok((value, scales))
}
