//! Epsilon-prediction objective and the ancestral reverse-process sampler.
//!
//! Images are batched as `[n, 1, h, w]` tensors. Every batch entry draws its
//! noise from its own seeded stream, so a sample depends only on its seed and
//! not on which other entries share the batch.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::nn::Gradients;
use crate::rng::{self, SeededRng};
use crate::{Denoiser, Error, Image, NoiseSchedule, Result, Tensor};

/// Tolerance on the `[-1, 1]` range check of normalized training inputs.
pub const RANGE_TOL: f64 = 1e-9;

/// Anything that predicts the injected noise from a condition, a noisy
/// target and the cumulative noise level.
pub trait NoisePredictor {
    fn predict_noise(&self, cond: &Tensor, noisy: &Tensor, a_bars: &[f64]) -> Result<Tensor>;
}

impl NoisePredictor for Denoiser {
    fn predict_noise(&self, cond: &Tensor, noisy: &Tensor, a_bars: &[f64]) -> Result<Tensor> {
        self.predict_batch(cond, noisy, a_bars)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReverseStepOutput {
    pub y_prev: Image,
    /// The clean-image estimate implied by the predicted noise at this step.
    pub y0_hat: Image,
}

/// One noising draw for a training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedBatch {
    pub steps: Vec<usize>,
    pub a_bars: Vec<f64>,
    pub eps: Tensor,
    pub noisy: Tensor,
}

fn check_normalized(t: &Tensor, what: &str) -> Result<()> {
    match t.data.iter().find(|v| !(v.abs() <= 1.0 + RANGE_TOL)) {
        Some(v) => Err(Error::Contract(format!("{what} value {v} outside [-1, 1]"))),
        None => Ok(()),
    }
}

fn check_pair(cond: &Tensor, y0: &Tensor) -> Result<()> {
    if cond.shape() != y0.shape() || cond.c != 1 {
        return Err(Error::arg("condition and target batches must be equal single-channel shapes"));
    }
    check_normalized(cond, "condition")?;
    check_normalized(y0, "target")
}

/// Draws `t ~ U{1..T}` and unit Gaussian noise per entry and diffuses `y0`.
pub fn noise_batch<R: Rng + ?Sized>(y0: &Tensor, schedule: &NoiseSchedule, rng: &mut R) -> NoisedBatch {
    let p = y0.plane();
    let mut steps = Vec::with_capacity(y0.n);
    let mut a_bars = Vec::with_capacity(y0.n);
    let mut eps = y0.zeros_like();
    let mut noisy = y0.zeros_like();
    for i in 0..y0.n {
        let t = rng.random_range(1..=schedule.steps());
        let ab = schedule.alpha_bar(t);
        let (a, b) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
        let e = rng::normal_vec(rng, p);
        let off = y0.plane_offset(i, 0);
        for (k, &ek) in e.iter().enumerate() {
            eps.data[off + k] = ek;
            noisy.data[off + k] = a * y0.data[off + k] + b * ek;
        }
        steps.push(t);
        a_bars.push(ab);
    }
    NoisedBatch {
        steps,
        a_bars,
        eps,
        noisy,
    }
}

/// Mean squared difference between predicted and true noise.
pub fn noise_mse(pred: &Tensor, eps: &Tensor) -> f64 {
    let sum: f64 = pred.data.iter().zip(&eps.data).map(|(a, b)| (a - b) * (a - b)).sum();
    sum / pred.len() as f64
}

/// Noise-prediction loss on one random draw for a batch of normalized pairs.
pub fn training_loss<M: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    model: &M,
    cond: &Tensor,
    y0: &Tensor,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<f64> {
    check_pair(cond, y0)?;
    let draw = noise_batch(y0, schedule, rng);
    let pred = model.predict_noise(cond, &draw.noisy, &draw.a_bars)?;
    Ok(noise_mse(&pred, &draw.eps))
}

/// [`training_loss`] together with its gradient for every parameter group.
pub fn training_loss_and_grad<R: Rng + ?Sized>(
    model: &Denoiser,
    cond: &Tensor,
    y0: &Tensor,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    check_pair(cond, y0)?;
    let draw = noise_batch(y0, schedule, rng);
    let scale = 2.0 / y0.len() as f64;
    let (pred, grads) = model.predict_and_backprop(cond, &draw.noisy, &draw.a_bars, |out| {
        let mut d = out.clone();
        for (g, e) in d.data.iter_mut().zip(&draw.eps.data) {
            *g = scale * (*g - e);
        }
        d
    })?;
    Ok((noise_mse(&pred, &draw.eps), grads))
}

/// Clean-image estimate `(y_t - sqrt(1 - abar) * eps_hat) / sqrt(abar)`.
pub fn estimate_y0(y_t: &Image, eps_hat: &Image, a_bar: f64) -> Result<Image> {
    if !(a_bar > 0.0 && a_bar <= 1.0) {
        return Err(Error::Degenerate("cumulative noise level must lie in (0, 1]"));
    }
    let (a, b) = (libm::sqrt(a_bar), libm::sqrt(1.0 - a_bar));
    y_t.zip_map(eps_hat, |y, e| (y - b * e) / a)
}

/// How the reverse-step mean is formed from the predicted noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ReverseMode {
    /// Mean taken directly from the noise prediction ([`reverse_update`]).
    Direct,
    /// Mean of the forward posterior around the implied clean estimate
    /// clipped to `[-1, 1]` ([`reverse_update_clipped`]). Identical to
    /// `Direct` whenever the estimate is in range, but a poor noise
    /// prediction at the first steps (where `1 / sqrt(alpha)` is large)
    /// cannot throw the chain out of the data range.
    #[default]
    ClipEstimate,
}

/// Scalar ancestral update
/// `(y - (1 - alpha) / sqrt(1 - abar) * eps_hat) / sqrt(alpha) + sqrt(1 - alpha) * z`.
#[inline]
pub fn reverse_update(y: f64, eps_hat: f64, alpha: f64, a_bar: f64, z: f64) -> f64 {
    let coef = if a_bar < 1.0 { (1.0 - alpha) / libm::sqrt(1.0 - a_bar) } else { 0.0 };
    (y - coef * eps_hat) / libm::sqrt(alpha) + libm::sqrt(1.0 - alpha) * z
}

/// Scalar posterior-mean update around the clipped clean estimate:
/// `c0 clip(y0_hat) + c1 y + sqrt(1 - alpha) z` with
/// `c0 = sqrt(abar_prev) (1 - alpha) / (1 - abar)` and
/// `c1 = sqrt(alpha) (1 - abar_prev) / (1 - abar)`, `abar_prev = abar / alpha`.
#[inline]
pub fn reverse_update_clipped(y: f64, eps_hat: f64, alpha: f64, a_bar: f64, z: f64) -> f64 {
    if a_bar >= 1.0 {
        return y;
    }
    let a_prev = (a_bar / alpha).min(1.0);
    let y0 = ((y - libm::sqrt(1.0 - a_bar) * eps_hat) / libm::sqrt(a_bar)).clamp(-1.0, 1.0);
    let c0 = libm::sqrt(a_prev) * (1.0 - alpha) / (1.0 - a_bar);
    let c1 = libm::sqrt(alpha) * (1.0 - a_prev) / (1.0 - a_bar);
    c0 * y0 + c1 * y + libm::sqrt(1.0 - alpha) * z
}

fn step_tensor(
    y: &mut Tensor,
    eps_hat: &Tensor,
    t: usize,
    schedule: &NoiseSchedule,
    mode: ReverseMode,
    rngs: &mut [SeededRng],
) {
    let (alpha, a_bar) = (schedule.alpha(t), schedule.alpha_bar(t));
    let update = match mode {
        ReverseMode::Direct => reverse_update,
        ReverseMode::ClipEstimate => reverse_update_clipped,
    };
    let p = y.plane();
    for (i, rng) in rngs.iter_mut().enumerate() {
        let off = y.plane_offset(i, 0);
        // the last step returns the posterior mean without fresh noise
        let z = if t > 1 { rng::normal_vec(rng, p) } else { alloc::vec![0.0; p] };
        for k in 0..p {
            y.data[off + k] = update(y.data[off + k], eps_hat.data[off + k], alpha, a_bar, z[k]);
        }
    }
}

/// One reverse step for a single image, noise from `rng`.
pub fn reverse_step<M: NoisePredictor + ?Sized>(
    model: &M,
    cond: &Image,
    y_t: &Image,
    t: usize,
    schedule: &NoiseSchedule,
    mode: ReverseMode,
    rng: &mut SeededRng,
) -> Result<ReverseStepOutput> {
    schedule.check_step(t)?;
    cond.ensure_same_shape(y_t)?;
    let a_bar = schedule.alpha_bar(t);
    let c = Tensor::from_images(&[cond])?;
    let mut y = Tensor::from_images(&[y_t])?;
    let eps_hat = model.predict_noise(&c, &y, &[a_bar])?;
    let y0_hat = estimate_y0(y_t, &eps_hat.image(0, 0), a_bar)?;
    step_tensor(&mut y, &eps_hat, t, schedule, mode, core::slice::from_mut(rng));
    Ok(ReverseStepOutput {
        y_prev: y.image(0, 0),
        y0_hat,
    })
}

/// Runs the full reverse chain `t = T..1` for every batch entry of `cond`,
/// entry `i` starting from Gaussian noise of its own stream `seeds[i]`.
/// Results are clipped to `[-1, 1]`.
pub fn sample_batch<M: NoisePredictor + ?Sized>(
    model: &M,
    cond: &Tensor,
    schedule: &NoiseSchedule,
    mode: ReverseMode,
    seeds: &[u64],
) -> Result<Tensor> {
    if cond.c != 1 || seeds.len() != cond.n {
        return Err(Error::arg("one seed per single-channel condition required"));
    }
    check_normalized(cond, "condition")?;
    let p = cond.plane();
    let mut rngs: Vec<SeededRng> = seeds.iter().map(|&s| rng::seeded(s)).collect();
    let mut y = cond.zeros_like();
    for (i, rng) in rngs.iter_mut().enumerate() {
        let off = y.plane_offset(i, 0);
        y.data[off..off + p].copy_from_slice(&rng::normal_vec(rng, p));
    }
    let mut a_bars = alloc::vec![0.0; cond.n];
    for t in (1..=schedule.steps()).rev() {
        a_bars.iter_mut().for_each(|a| *a = schedule.alpha_bar(t));
        let eps_hat = model.predict_noise(cond, &y, &a_bars)?;
        step_tensor(&mut y, &eps_hat, t, schedule, mode, &mut rngs);
    }
    y.data.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    Ok(y)
}

/// A single reconstruction of `cond`, deterministic in `seed`.
pub fn sample<M: NoisePredictor + ?Sized>(
    model: &M,
    cond: &Image,
    schedule: &NoiseSchedule,
    mode: ReverseMode,
    seed: u64,
) -> Result<Image> {
    let c = Tensor::from_images(&[cond])?;
    Ok(sample_batch(model, &c, schedule, mode, &[seed])?.image(0, 0))
}
