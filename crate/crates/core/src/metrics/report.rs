use alloc::string::String;
use alloc::vec::Vec;

use super::resolution::{decorrelation_resolution, resolution_ratio, DecorrelationParams};
use super::ssim::{ms_ssim, ssim, SsimParams};
use super::stats::{moods_median_test, MoodTest};
use super::{mae, nrmse, pearson, psnr, PEAK};
use crate::{Image, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Mae,
    Nrmse,
    Psnr,
    Ssim,
    MsSsim,
    Pearson,
    Resolution,
    ResolutionRatio,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Mae,
        MetricKind::Nrmse,
        MetricKind::Psnr,
        MetricKind::Ssim,
        MetricKind::MsSsim,
        MetricKind::Pearson,
        MetricKind::Resolution,
        MetricKind::ResolutionRatio,
    ];

    /// Column name used in reports.
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mae => "mae",
            MetricKind::Nrmse => "nrmse",
            MetricKind::Psnr => "psnr_db",
            MetricKind::Ssim => "ssim",
            MetricKind::MsSsim => "ms_ssim",
            MetricKind::Pearson => "pearson",
            MetricKind::Resolution => "resolution_nm",
            MetricKind::ResolutionRatio => "resolution_ratio",
        }
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).expect("listed")
    }
}

/// Metrics of one prediction against its ground truth. Entries are `None`
/// where the metric is undefined (constant images, no resolution peak).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub name: String,
    pub values: [Option<f64>; 8],
    /// Scale count used by MS-SSIM.
    pub ms_ssim_scales: usize,
}

impl ImageMetrics {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        self.values[kind.index()]
    }

    /// True when prediction and ground truth are identical (infinite PSNR).
    pub fn identical(&self) -> bool {
        self.get(MetricKind::Psnr) == Some(f64::INFINITY)
    }
}

/// All metrics for one pair of 8-bit-scale images.
pub fn evaluate_pair(
    name: impl Into<String>,
    gt: &Image,
    pred: &Image,
    pixel_size: f64,
    ssim_params: &SsimParams,
    decorr: &DecorrelationParams,
) -> Result<ImageMetrics> {
    gt.ensure_same_shape(pred)?;
    let (ms, scales) = ms_ssim(gt, pred, ssim_params)?;
    let r_pred = decorrelation_resolution(pred, pixel_size, decorr).ok();
    let r_gt = decorrelation_resolution(gt, pixel_size, decorr).ok();
    let ratio = match (r_pred, r_gt) {
        (Some(p), Some(g)) => resolution_ratio(p, g).ok(),
        _ => None,
    };
    Ok(ImageMetrics {
        name: name.into(),
        values: [
            Some(mae(gt, pred)?),
            nrmse(gt, pred).ok(),
            Some(psnr(gt, pred, PEAK)?),
            Some(ssim(gt, pred, ssim_params)?),
            Some(ms),
            pearson(gt, pred).ok(),
            r_pred,
            ratio,
        ],
        ms_ssim_scales: scales,
    })
}

/// Median with the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub medians: [Option<f64>; 8],
    /// Number of images contributing to each median.
    pub counts: [usize; 8],
}

impl MetricSummary {
    pub fn median(&self, kind: MetricKind) -> Option<f64> {
        self.medians[kind.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<ImageMetrics>,
    pub summary: MetricSummary,
}

impl MetricReport {
    pub fn new(rows: Vec<ImageMetrics>) -> Self {
        let mut summary = MetricSummary {
            medians: [None; 8],
            counts: [0; 8],
        };
        for kind in MetricKind::ALL {
            let v: Vec<f64> = rows.iter().filter_map(|r| r.get(kind)).collect();
            summary.medians[kind.index()] = median(&v);
            summary.counts[kind.index()] = v.len();
        }
        Self { rows, summary }
    }

    /// Defined per-image values of one metric, in row order.
    pub fn values(&self, kind: MetricKind) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.get(kind)).collect()
    }

    /// Mood's median test of every metric against another report; `None`
    /// where a metric has no values or the test is undefined.
    pub fn mood_tests(&self, other: &MetricReport) -> Vec<(MetricKind, Option<MoodTest>)> {
        MetricKind::ALL
            .iter()
            .map(|&k| (k, moods_median_test(&self.values(k), &other.values(k)).ok()))
            .collect()
    }
}
