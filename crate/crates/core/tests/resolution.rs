//! Decorrelation resolution on images with a known spectrum.

use std::f64::consts::PI;

use condiff_core::data::{generate_phantom, PhantomParams};
use condiff_core::metrics::{decorrelation_resolution, resolution_ratio, DecorrelationParams};
use condiff_core::rng::{normal_image, seeded};
use condiff_core::Image;

fn sinusoid(side: usize, period: f64) -> Image {
    Image::from_fn(side, side, |x, y| {
        128.0 + 50.0 * (2.0 * PI * x as f64 / period).cos() + 50.0 * (2.0 * PI * y as f64 / period).cos()
    })
}

/// Phantom plus mild Gaussian noise so that the spectrum has a noise floor.
fn noisy_phantom(seed: u64, blur: f64) -> Image {
    let clean = generate_phantom(seed, &PhantomParams::default()).unwrap();
    let base = if blur > 0.0 { clean.gaussian_blur(blur) } else { clean };
    let noise = normal_image(&mut seeded(seed + 100), 64, 64);
    base.zip_map(&noise, |v, n| v + 3.0 * n).unwrap()
}

#[test]
fn sinusoid_period_gives_its_half_period_resolution() {
    // spatial frequency 1/8 cycles per pixel sits at a quarter of Nyquist
    let p = DecorrelationParams::default();
    let want = 2.0 * 20.0 / 0.25;
    for side in [64, 128] {
        let r = decorrelation_resolution(&sinusoid(side, 8.0), 20.0, &p).unwrap();
        assert!((r / want - 1.0).abs() < 0.1, "side {side}: R = {r}");
    }
}

#[test]
fn resolution_is_linear_in_pixel_size() {
    let p = DecorrelationParams::default();
    let img = noisy_phantom(1, 0.0);
    let r1 = decorrelation_resolution(&img, 20.0, &p).unwrap();
    let r2 = decorrelation_resolution(&img, 40.0, &p).unwrap();
    assert_eq!(r2, 2.0 * r1);
    let r3 = decorrelation_resolution(&img, 7.5, &p).unwrap();
    assert!((r3 / r1 - 7.5 / 20.0).abs() < 1e-12);
}

#[test]
fn blur_coarsens_resolution() {
    let p = DecorrelationParams::default();
    for seed in 0..3 {
        let sharp = decorrelation_resolution(&noisy_phantom(seed, 0.0), 20.0, &p).unwrap();
        let soft = decorrelation_resolution(&noisy_phantom(seed, 2.0), 20.0, &p).unwrap();
        assert!(soft > sharp, "seed {seed}: {soft} <= {sharp}");
        assert!(resolution_ratio(soft, sharp).unwrap() > 1.0);
    }
}

#[test]
fn intensity_scaling_leaves_resolution_unchanged() {
    let p = DecorrelationParams::default();
    let img = noisy_phantom(2, 0.0);
    let r = decorrelation_resolution(&img, 20.0, &p).unwrap();
    let scaled = decorrelation_resolution(&img.map(|v| 0.3 * v), 20.0, &p).unwrap();
    assert!((scaled - r).abs() < 1e-9 * r);
}

#[test]
fn ratio_hand_cases() {
    assert_eq!(resolution_ratio(160.0, 80.0).unwrap(), 2.0);
    assert_eq!(resolution_ratio(55.0, 55.0).unwrap(), 1.0);
    assert!(resolution_ratio(0.0, 80.0).is_err());
    assert!(resolution_ratio(10.0, -1.0).is_err());
}
