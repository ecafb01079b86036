//! Image-quality metrics on the 8-bit intensity scale, the decorrelation
//! resolution estimate and Mood's median test.

mod report;
mod resolution;
mod ssim;
mod stats;

pub use report::{evaluate_pair, median, ImageMetrics, MetricKind, MetricReport, MetricSummary};
pub use resolution::{decorrelation_curve, decorrelation_resolution, resolution_ratio, Apodization, DecorrelationParams};
pub use ssim::{ms_ssim, ms_ssim_scales, ssim, SsimParams, MS_SSIM_WEIGHTS};
pub use stats::{moods_median_test, MoodTest};

use crate::{Error, Image, Result};

/// Peak value of the 8-bit scale.
pub const PEAK: f64 = 255.0;

pub fn mae(y: &Image, yhat: &Image) -> Result<f64> {
    y.ensure_same_shape(yhat)?;
    Ok(y.data().iter().zip(yhat.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn mse(y: &Image, yhat: &Image) -> Result<f64> {
    y.ensure_same_shape(yhat)?;
    Ok(y.data().iter().zip(yhat.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Root mean squared error divided by the ground-truth mean.
pub fn nrmse(y: &Image, yhat: &Image) -> Result<f64> {
    let e = mse(y, yhat)?;
    let m = y.mean();
    if m == 0.0 {
        return Err(Error::Degenerate("ground truth has zero mean"));
    }
    Ok(libm::sqrt(e) / m)
}

/// `10 log10(L^2 / MSE)` in dB; `+inf` for identical images.
pub fn psnr(y: &Image, yhat: &Image, peak: f64) -> Result<f64> {
    let e = mse(y, yhat)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(peak * peak / e))
}

/// Pearson correlation coefficient.
pub fn pearson(y: &Image, yhat: &Image) -> Result<f64> {
    y.ensure_same_shape(yhat)?;
    let (my, mh) = (y.mean(), yhat.mean());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.data().iter().zip(yhat.data()) {
        let (da, db) = (a - my, b - mh);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation undefined for a constant image"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}
