//! Cosine variance schedule and the closed-form forward (noising) process.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use crate::{Error, Image, Result};

/// Largest admissible per-step noise fraction `1 - alpha_t`.
pub const MAX_BETA: f64 = 0.999;

/// Precomputed per-step retention factors `alpha_t` and their running
/// products `alpha_bar_t` for steps `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    offset: f64,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Cosine schedule `f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)`,
    /// `alpha_bar_t = f(t) / f(0)`, with each `1 - alpha_t` capped at
    /// [`MAX_BETA`] and `alpha_bar` rebuilt as the product of the capped steps.
    pub fn cosine(steps: usize, offset: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("schedule needs at least one step"));
        }
        if !(offset > 0.0 && offset < 1.0) {
            return Err(Error::config("cosine offset must lie in (0, 1)"));
        }
        let f = |t: usize| {
            let c = libm::cos(((t as f64 / steps as f64 + offset) / (1.0 + offset)) * FRAC_PI_2);
            c * c
        };
        let f0 = f(0);
        let mut alphas = Vec::with_capacity(steps);
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut prev_closed = 1.0;
        let mut running = 1.0;
        for t in 1..=steps {
            let closed = f(t) / f0;
            let alpha = (closed / prev_closed).clamp(1.0 - MAX_BETA, 1.0);
            prev_closed = closed;
            running *= alpha;
            alphas.push(alpha);
            alpha_bars.push(running);
        }
        Ok(Self {
            steps,
            offset,
            alphas,
            alpha_bars,
        })
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `alpha_t` for `t` in `1..=T`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `alpha_bar_t` for `t` in `0..=T`, with `alpha_bar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::arg(alloc::format!(
                "step {t} outside 1..={}",
                self.steps
            )));
        }
        Ok(())
    }

    /// Pixel-wise `sqrt(abar_t) * y0 + sqrt(1 - abar_t) * eps`.
    pub fn forward_diffuse(&self, y0: &Image, t: usize, eps: &Image) -> Result<Image> {
        self.check_step(t)?;
        let ab = self.alpha_bar(t);
        let (a, b) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
        y0.zip_map(eps, |y, e| a * y + b * e)
    }
}
