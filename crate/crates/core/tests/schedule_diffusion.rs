//! Cosine schedule against its closed form and the forward/backward
//! algebra of the diffusion process against hand evaluations.

use std::f64::consts::FRAC_PI_2;

use condiff_core::diffusion::{estimate_y0, reverse_update, reverse_update_clipped, training_loss, NoisePredictor};
use condiff_core::rng::{normal_image, seeded};
use condiff_core::{Image, NoiseSchedule, Result, Tensor};
use rand::Rng;

fn closed_form(t: f64, steps: f64, s: f64) -> f64 {
    let f = |u: f64| ((u / steps + s) / (1.0 + s) * FRAC_PI_2).cos().powi(2);
    f(t) / f(0.0)
}

#[test]
fn alpha_bar_matches_closed_form_below_the_cap() {
    let sched = NoiseSchedule::cosine(200, 8e-3).unwrap();
    assert!((sched.alpha_bar(100) - 0.4939).abs() < 1e-3);
    for t in 1..=190 {
        let want = closed_form(t as f64, 200.0, 8e-3);
        assert!((sched.alpha_bar(t) - want).abs() < 1e-12, "t={t}");
    }
    assert!(sched.alpha_bar(1) < 1.0);
    assert!(sched.alpha_bar(200) < 1e-3);
}

#[test]
fn alpha_bar_is_the_running_product_and_decreasing() {
    let sched = NoiseSchedule::cosine(200, 8e-3).unwrap();
    let mut prod = 1.0;
    for t in 1..=200 {
        let a = sched.alpha(t);
        assert!(a > 0.0 && a <= 1.0);
        assert!(1.0 - a <= 0.999 + 1e-15);
        prod *= a;
        assert!((sched.alpha_bar(t) - prod).abs() < 1e-15);
        if t > 1 {
            assert!(sched.alpha_bar(t) < sched.alpha_bar(t - 1));
        }
    }
    assert_eq!(sched, NoiseSchedule::cosine(200, 8e-3).unwrap());
}

#[test]
fn schedule_rejects_bad_parameters_and_steps() {
    assert!(NoiseSchedule::cosine(0, 8e-3).is_err());
    assert!(NoiseSchedule::cosine(10, 0.0).is_err());
    let sched = NoiseSchedule::cosine(10, 8e-3).unwrap();
    assert!(sched.check_step(0).is_err());
    assert!(sched.check_step(11).is_err());
    assert!(sched.check_step(10).is_ok());
}

#[test]
fn forward_diffusion_moments_match_the_marginal() {
    let sched = NoiseSchedule::cosine(200, 8e-3).unwrap();
    let t = 60;
    let ab = sched.alpha_bar(t);
    let y0 = Image::filled(200, 200, 0.4);
    let mut rng = seeded(17);
    let eps = normal_image(&mut rng, 200, 200);
    let yt = sched.forward_diffuse(&y0, t, &eps).unwrap();
    let n = yt.len() as f64;
    let mean = yt.mean();
    let var = yt.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd_mean = (1.0 - ab).sqrt() / n.sqrt();
    assert!((mean - ab.sqrt() * 0.4).abs() < 4.0 * sd_mean);
    assert!((var / (1.0 - ab) - 1.0).abs() < 0.02);
}

#[test]
fn oracle_inversion_for_every_step() {
    let sched = NoiseSchedule::cosine(200, 8e-3).unwrap();
    let mut rng = seeded(3);
    let y0 = Image::from_fn(16, 16, |_, _| rng.random_range(-1.0..1.0));
    for t in 1..=200 {
        let eps = normal_image(&mut rng, 16, 16);
        let yt = sched.forward_diffuse(&y0, t, &eps).unwrap();
        let back = estimate_y0(&yt, &eps, sched.alpha_bar(t)).unwrap();
        let err = back.data().iter().zip(y0.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "t={t} err={err}");
    }
}

#[test]
fn estimate_hand_cases() {
    let one = |v: f64| Image::filled(1, 1, v);
    let got = estimate_y0(&one(0.5), &one(0.2), 0.25).unwrap().get(0, 0);
    assert!((got - (0.5 - 0.75f64.sqrt() * 0.2) / 0.5).abs() < 1e-12);
    assert!((got - 0.6536).abs() < 1e-4);
    let got = estimate_y0(&one(0.3), &one(0.0), 0.09).unwrap().get(0, 0);
    assert!((got - 1.0).abs() < 1e-12);
    assert!(estimate_y0(&one(0.3), &one(0.0), 0.0).is_err());
}

/// Posterior mean of `q(y_{t-1} | y_t, y_0)` written in terms of `y_0`.
fn posterior_mean(y0: f64, yt: f64, alpha: f64, a_bar: f64) -> f64 {
    let prev = a_bar / alpha;
    (prev.sqrt() * (1.0 - alpha) * y0 + alpha.sqrt() * (1.0 - prev) * yt) / (1.0 - a_bar)
}

#[test]
fn reverse_update_is_the_posterior_mean_plus_noise() {
    let sched = NoiseSchedule::cosine(200, 8e-3).unwrap();
    let mut rng = seeded(9);
    for _ in 0..500 {
        let t = rng.random_range(2..=200);
        let (alpha, ab) = (sched.alpha(t), sched.alpha_bar(t));
        let y0: f64 = rng.random_range(-1.0..1.0);
        let eps: f64 = rng.random_range(-2.0..2.0);
        let yt = ab.sqrt() * y0 + (1.0 - ab).sqrt() * eps;
        let z: f64 = rng.random_range(-2.0..2.0);
        let want = posterior_mean(y0, yt, alpha, ab) + (1.0 - alpha).sqrt() * z;
        let direct = reverse_update(yt, eps, alpha, ab, z);
        let clipped = reverse_update_clipped(yt, eps, alpha, ab, z);
        let scale = 1.0 + want.abs();
        assert!((direct - want).abs() < 1e-8 * scale / alpha.sqrt(), "t={t}");
        assert!((clipped - want).abs() < 1e-8 * scale, "t={t}");
    }
}

#[test]
fn degenerate_step_is_the_identity() {
    assert_eq!(reverse_update(0.37, 0.9, 1.0, 0.5, 1.3), 0.37);
}

struct Zero;

impl NoisePredictor for Zero {
    fn predict_noise(&self, _: &Tensor, noisy: &Tensor, _: &[f64]) -> Result<Tensor> {
        Ok(noisy.zeros_like())
    }
}

#[test]
fn zero_model_loss_is_the_noise_energy() {
    let sched = NoiseSchedule::cosine(200, 8e-3).unwrap();
    let mut rng = seeded(5);
    let y0 = Tensor::from_vec(1, 1, 4, 4, vec![0.25; 16]).unwrap();
    let cond = y0.clone();
    let total: f64 = (0..1000).map(|_| training_loss(&Zero, &cond, &y0, &sched, &mut rng).unwrap()).sum();
    assert!((total / 1000.0 - 1.0).abs() < 0.03);
}
