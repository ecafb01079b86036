//! Training loop: paired augmentation, AdamW with decoupled weight decay,
//! cosine learning-rate annealing, forced weight normalization after every
//! step, and model selection by validation MAE of single reverse-process
//! samples.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::diffusion::{sample_batch, training_loss_and_grad, ReverseMode};
use crate::image::denormalize;
use crate::nn::{Gradients, ParamGroup};
use crate::rng::{derive_seed, seeded};
use crate::{Denoiser, Error, Image, NoiseSchedule, Result, Tensor};

/// Largest batch pushed through one validation sampling chain.
const VAL_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub flip: bool,
    pub rotate: bool,
    /// Probability of blurring the condition image.
    pub blur_prob: f64,
    /// Blur widths are drawn uniformly from `[0, blur_sigma_max]` pixels.
    pub blur_sigma_max: f64,
    /// Validate after every `val_every` epochs and after the last one.
    pub val_every: usize,
    /// Seed from which the per-pair validation sampling seeds derive.
    pub val_seed: u64,
    /// Reverse-step form used for validation samples.
    pub sampler: ReverseMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            lr_init: 2e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            flip: true,
            rotate: true,
            blur_prob: 0.3,
            blur_sigma_max: 1.0,
            val_every: 1,
            val_seed: 0x5eed,
            sampler: ReverseMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.lr_init >= 0.0 && self.lr_init.is_finite()) {
            return Err(Error::config("lr_init must be finite and non-negative"));
        }
        if self.epochs == 0 || self.val_every == 0 {
            return Err(Error::config("epochs and val_every must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("optimizer constants out of range"));
        }
        if !(0.0..=1.0).contains(&self.blur_prob) || !(self.blur_sigma_max >= 0.0) {
            return Err(Error::config("blur augmentation constants out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    /// `None` on epochs without validation.
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Validation MAE of the untrained model.
    pub initial_val_mae: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned checkpoint: first minimum of validation MAE.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_mae(&self) -> Option<f64> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch).and_then(|e| e.val_mae)
    }
}

/// A normalized training pair: condition `x` and target `y0`, both in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub x: Image,
    pub y0: Image,
}

/// Same random flips and right-angle rotation applied to both images; the
/// condition alone is blurred with probability `blur_prob`.
pub fn augment<R: Rng + ?Sized>(x: &Image, y0: &Image, cfg: &TrainConfig, rng: &mut R) -> (Image, Image) {
    let (mut a, mut b) = (x.clone(), y0.clone());
    if cfg.flip {
        if rng.random_bool(0.5) {
            a = a.flip_horizontal();
            b = b.flip_horizontal();
        }
        if rng.random_bool(0.5) {
            a = a.flip_vertical();
            b = b.flip_vertical();
        }
    }
    if cfg.rotate && a.width() == a.height() {
        let k = rng.random_range(0..4);
        a = a.rot90_k(k);
        b = b.rot90_k(k);
    }
    if cfg.blur_prob > 0.0 && rng.random_bool(cfg.blur_prob) {
        let sigma = rng.random_range(0.0..=cfg.blur_sigma_max);
        a = a.gaussian_blur(sigma);
    }
    (a, b)
}

/// `lr_init * (1 + cos(pi * step / (total - 1))) / 2`: starts at `lr_init`
/// and reaches zero on the last step.
pub fn cosine_lr(lr_init: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return lr_init;
    }
    let progress = (step.min(total - 1)) as f64 / (total - 1) as f64;
    0.5 * lr_init * (1.0 + libm::cos(PI * progress))
}

/// Adam moments with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl AdamW {
    pub fn new(params: &[ParamGroup], beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = || params.iter().map(|g| alloc::vec![0.0; g.data.len()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// `p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [ParamGroup], grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let shrink = 1.0 - lr * self.weight_decay;
        for (gi, group) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[gi], &mut self.v[gi]);
            for (k, (p, &g)) in group.data.iter_mut().zip(grads.group(gi)).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let update = (m[k] / c1) / (libm::sqrt(v[k] / c2) + self.eps);
                *p = *p * shrink - lr * update;
            }
        }
    }
}

fn to_batch(images: &[&Image]) -> Result<Tensor> {
    Tensor::from_images(images)
}

/// Validation MAE on the 8-bit scale, one sample per pair seeded by
/// `derive_seed(val_seed, index)`.
pub fn validation_mae(
    model: &Denoiser,
    val: &[TrainPair],
    schedule: &NoiseSchedule,
    mode: ReverseMode,
    val_seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (c, chunk) in val.chunks(VAL_CHUNK).enumerate() {
        let conds: Vec<&Image> = chunk.iter().map(|p| &p.x).collect();
        let seeds: Vec<u64> = (0..chunk.len()).map(|i| derive_seed(val_seed, (c * VAL_CHUNK + i) as u64)).collect();
        let out = sample_batch(model, &to_batch(&conds)?, schedule, mode, &seeds)?;
        for (i, pair) in chunk.iter().enumerate() {
            let pred = denormalize(&out.image(i, 0));
            let gt = denormalize(&pair.y0);
            total += pred.data().iter().zip(gt.data()).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum::<f64>();
            count += gt.data().len();
        }
    }
    Ok(total / count as f64)
}

/// Trains `model` and returns the checkpoint with the lowest validation MAE
/// (first occurrence on ties) together with the history. `observer` sees
/// every finished epoch.
pub fn train(
    mut model: Denoiser,
    train_set: &[TrainPair],
    val_set: &[TrainPair],
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<(Denoiser, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::arg("training and validation sets must be nonempty"));
    }
    model.normalize_weights()?;
    let initial_val_mae = validation_mae(&model, val_set, schedule, cfg.sampler, cfg.val_seed)?;
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut opt = AdamW::new(model.params(), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let mut history = TrainHistory {
        initial_val_mae,
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(f64, Denoiser)> = None;
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let mut rng = seeded(derive_seed(cfg.seed, epoch as u64));
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let pairs: Vec<(Image, Image)> = batch
                .iter()
                .map(|&i| augment(&train_set[i].x, &train_set[i].y0, cfg, &mut rng))
                .collect();
            let xs: Vec<&Image> = pairs.iter().map(|p| &p.0).collect();
            let ys: Vec<&Image> = pairs.iter().map(|p| &p.1).collect();
            let (loss, grads) = training_loss_and_grad(&model, &to_batch(&xs)?, &to_batch(&ys)?, schedule, &mut rng)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt.step(model.params_mut(), &grads, cosine_lr(cfg.lr_init, step, total_steps));
            // an update that overflows leaves weights that cannot be renormalized
            model.normalize_weights().map_err(|_| Error::Diverged { epoch })?;
            loss_sum += loss;
            step += 1;
        }
        let validate = epoch % cfg.val_every == 0 || epoch == cfg.epochs;
        let val_mae = if validate {
            Some(validation_mae(&model, val_set, schedule, cfg.sampler, cfg.val_seed)?)
        } else {
            None
        };
        if let Some(v) = val_mae {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.clone()));
                history.best_epoch = epoch;
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / steps_per_epoch as f64,
            val_mae,
        };
        observer(&record);
        history.epochs.push(record);
    }
    let (_, best_model) = best.expect("last epoch is always validated");
    Ok((best_model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamKind;
    use alloc::vec;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(2e-4, 0, 100), 2e-4);
        assert!(cosine_lr(2e-4, 99, 100) <= 1e-3 * 2e-4);
        assert!((cosine_lr(1.0, 50, 101) - 0.5).abs() < 1e-12);
        assert_eq!(cosine_lr(0.3, 0, 1), 0.3);
    }

    #[test]
    fn decoupled_decay_shrinks_geometrically() {
        let mut groups = vec![ParamGroup {
            name: "probe".into(),
            shape: vec![2, 2],
            kind: ParamKind::Weight,
            data: vec![1.0, -2.0, 3.0, 0.5],
        }];
        let grads = Gradients::zeros_for(&groups);
        let mut opt = AdamW::new(&groups, 0.9, 0.999, 1e-8, 0.1);
        let start = groups[0].data.clone();
        for k in 1..=5 {
            opt.step(&mut groups, &grads, 0.5);
            let factor = libm::pow(1.0 - 0.05, k as f64);
            for (p, s) in groups[0].data.iter().zip(&start) {
                assert!((p - s * factor).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn augmentation_keeps_shapes_and_pairs_geometry() {
        let x = Image::from_fn(8, 8, |i, j| (i * 8 + j) as f64);
        let cfg = TrainConfig {
            blur_prob: 0.0,
            ..Default::default()
        };
        let mut rng = seeded(4);
        for _ in 0..16 {
            let (a, b) = augment(&x, &x, &cfg, &mut rng);
            assert_eq!(a, b);
            assert_eq!(a.shape(), x.shape());
        }
        let off = TrainConfig {
            flip: false,
            rotate: false,
            blur_prob: 0.0,
            ..Default::default()
        };
        assert_eq!(augment(&x, &x, &off, &mut rng), (x.clone(), x.clone()));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr_init: -1.0, ..Default::default() }.validate().is_err());
    }
}
