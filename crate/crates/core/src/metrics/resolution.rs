//! Single-image resolution from decorrelation analysis: the cross-correlation
//! between the spectrum and its phase-only (unit-modulus) version, restricted
//! to a disk of growing radius, peaks at the highest frequency that still
//! carries signal above the noise.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fft::{fft2, Complex};
use crate::{Error, Image, Result};

/// Suppression of the spectral artifacts caused by the image borders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Apodization {
    /// Spectrum of the periodic component of the periodic-plus-smooth
    /// decomposition: border discontinuities are removed without windowing,
    /// so periodic content keeps a leakage-free spectrum.
    PeriodicSmooth,
    /// Raised-cosine taper over the given fraction of each side.
    CosineTaper(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecorrelationParams {
    /// Mask radii `r_i = i / radii` for `i = 1..=radii`, in units of Nyquist.
    pub radii: usize,
    /// Number of Gaussian high-pass filters in addition to the unfiltered curve.
    pub high_pass_filters: usize,
    /// Smallest high-pass width in pixels; the largest is the image size.
    pub min_width: f64,
    pub apodization: Apodization,
    /// Minimum rise of a peak above the lowest value at larger radii.
    pub min_prominence: f64,
}

impl Default for DecorrelationParams {
    fn default() -> Self {
        Self {
            radii: 50,
            high_pass_filters: 10,
            min_width: 2.0,
            apodization: Apodization::PeriodicSmooth,
            min_prominence: 0.05,
        }
    }
}

/// Mean-subtracted image with a raised-cosine taper along every border.
fn cosine_taper(img: &Image, fraction: f64) -> Vec<f64> {
    let (w, h) = img.shape();
    let mean = img.mean();
    let taper = |i: usize, n: usize| {
        let m = libm::ceil(fraction * n as f64) as usize;
        let d = i.min(n - 1 - i);
        if m == 0 || d >= m {
            1.0
        } else {
            0.5 * (1.0 - libm::cos(PI * (d as f64 + 0.5) / m as f64))
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push((img.get(x, y) - mean) * taper(x, w) * taper(y, h));
        }
    }
    out
}

/// Spectrum of the periodic component of `img` with the DC bin zeroed.
fn periodic_spectrum(img: &Image) -> Vec<Complex> {
    let n = img.width();
    let u = img.data();
    // jumps across opposite borders
    let mut v = alloc::vec![0.0; n * n];
    for i in 0..n {
        let (l, r) = (u[i * n], u[i * n + n - 1]);
        v[i * n] += r - l;
        v[i * n + n - 1] += l - r;
        let (t, b) = (u[i], u[(n - 1) * n + i]);
        v[i] += b - t;
        v[(n - 1) * n + i] += t - b;
    }
    let mut spec = fft2(u, n, n);
    let vs = fft2(&v, n, n);
    for q in 0..n {
        for p in 0..n {
            let k = q * n + p;
            if k == 0 {
                spec[0] = Complex::ZERO;
                continue;
            }
            let den = 2.0 * libm::cos(2.0 * PI * p as f64 / n as f64) + 2.0 * libm::cos(2.0 * PI * q as f64 / n as f64) - 4.0;
            spec[k] = spec[k] - vs[k].scale(1.0 / den);
        }
    }
    spec
}

/// Radial frequency of every DFT bin in units of Nyquist (`0.5` cycles/px).
fn radial_grid(n: usize) -> Vec<f64> {
    let signed = |k: usize| if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    let half = n as f64 / 2.0;
    let mut r = Vec::with_capacity(n * n);
    for ky in 0..n {
        for kx in 0..n {
            r.push(libm::hypot(signed(kx), signed(ky)) / half);
        }
    }
    r
}

fn curve(spec: &[Complex], unit: &[Complex], radius: &[f64], radii: usize) -> Vec<f64> {
    let in_disk: Vec<usize> = (0..spec.len()).filter(|&i| radius[i] < 1.0).collect();
    let energy: f64 = in_disk.iter().map(|&i| spec[i].norm_sqr()).sum();
    (1..=radii)
        .map(|k| {
            let r = k as f64 / radii as f64;
            let (mut num, mut count) = (0.0, 0.0);
            for &i in &in_disk {
                if radius[i] < r {
                    num += (spec[i] * unit[i].conj()).re;
                    count += unit[i].norm_sqr();
                }
            }
            if energy == 0.0 || count == 0.0 {
                0.0
            } else {
                num / libm::sqrt(energy * count)
            }
        })
        .collect()
}

/// Index of the highest local maximum that rises at least `prominence`
/// above the minimum at larger radii; maxima at the end of the curve are
/// discarded by shortening it.
fn find_peak(d: &[f64], prominence: f64) -> Option<usize> {
    let mut len = d.len();
    while len > 1 {
        let (ind, a) = d[..len]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        if ind + 1 == len {
            len -= 1;
            continue;
        }
        let tail_min = d[ind..].iter().copied().fold(f64::INFINITY, f64::min);
        if a - tail_min >= prominence {
            return Some(ind);
        }
        len = ind;
    }
    None
}

/// Decorrelation curves `d(r)` of the unfiltered image followed by one per
/// Gaussian high-pass filter, evaluated at radii `i / radii`.
pub fn decorrelation_curve(img: &Image, params: &DecorrelationParams) -> Result<Vec<Vec<f64>>> {
    let (w, h) = img.shape();
    if w != h || w < 4 {
        return Err(Error::arg("decorrelation analysis needs a square image of side >= 4"));
    }
    if params.radii == 0 {
        return Err(Error::config("at least one mask radius required"));
    }
    let n = w;
    let spec = match params.apodization {
        Apodization::PeriodicSmooth => periodic_spectrum(img),
        Apodization::CosineTaper(f) => fft2(&cosine_taper(img, f), n, n),
    };
    let unit: Vec<Complex> = spec
        .iter()
        .map(|&c| {
            let m = c.abs();
            if m > 0.0 && m.is_finite() { c.scale(1.0 / m) } else { Complex::ZERO }
        })
        .collect();
    let radius = radial_grid(n);
    let mut curves = alloc::vec![curve(&spec, &unit, &radius, params.radii)];
    let ng = params.high_pass_filters;
    let (g_hi, g_lo) = (libm::log(n as f64), libm::log(params.min_width));
    for j in 0..ng {
        let t = if ng > 1 { j as f64 / (ng - 1) as f64 } else { 0.0 };
        let g = libm::exp(g_hi + t * (g_lo - g_hi));
        let filtered: Vec<Complex> = spec
            .iter()
            .zip(&radius)
            .map(|(&c, &r)| {
                // r is in units of Nyquist; frequency in cycles per pixel is r / 2
                let f = 0.5 * r;
                c.scale(1.0 - libm::exp(-2.0 * PI * PI * g * g * f * f))
            })
            .collect();
        curves.push(curve(&filtered, &unit, &radius, params.radii));
    }
    Ok(curves)
}

/// Resolution `2 * pixel_size / max_i r_i` over the peak positions `r_i` of
/// all decorrelation curves, in the unit of `pixel_size`.
pub fn decorrelation_resolution(img: &Image, pixel_size: f64, params: &DecorrelationParams) -> Result<f64> {
    if !(pixel_size > 0.0) {
        return Err(Error::arg("pixel size must be positive"));
    }
    let curves = decorrelation_curve(img, params)?;
    let r_max = curves
        .iter()
        .filter_map(|d| find_peak(d, params.min_prominence))
        .map(|i| (i + 1) as f64 / params.radii as f64)
        .fold(0.0, f64::max);
    if r_max == 0.0 {
        return Err(Error::NoResolutionPeak);
    }
    Ok(2.0 * pixel_size / r_max)
}

/// `R_pred / R_gt`; above one means the prediction resolves less detail.
pub fn resolution_ratio(r_pred: f64, r_gt: f64) -> Result<f64> {
    if !(r_pred > 0.0 && r_gt > 0.0) {
        return Err(Error::arg("resolutions must be positive"));
    }
    Ok(r_pred / r_gt)
}
