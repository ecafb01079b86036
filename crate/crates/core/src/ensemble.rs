//! Repeated sampling of one condition: averaged reconstruction and the
//! per-pixel standard-deviation and entropy uncertainty maps.

use alloc::vec::Vec;

use crate::diffusion::{self, NoisePredictor, ReverseMode};
use crate::image::denormalize;
use crate::{Error, Image, Image8, NoiseSchedule, Result, Tensor};

/// Reconstructions of a single condition under distinct seeds, stored in
/// seed order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<Image>,
    seeds: Vec<u64>,
}

fn ensure_distinct(seeds: &[u64]) -> Result<()> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::arg(alloc::format!("duplicate seed {}", w[0])));
    }
    Ok(())
}

impl SampleSet {
    pub fn new(samples: Vec<Image>, seeds: Vec<u64>) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::arg("empty sample set"))?;
        if samples.len() != seeds.len() {
            return Err(Error::arg("one seed per sample required"));
        }
        for s in &samples {
            first.ensure_same_shape(s)?;
        }
        ensure_distinct(&seeds)?;
        Ok(Self { samples, seeds })
    }

    pub fn samples(&self) -> &[Image] {
        &self.samples
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples denormalized to 8 bits.
    pub fn quantized(&self) -> Vec<Image8> {
        self.samples.iter().map(denormalize).collect()
    }

    pub fn average(&self) -> Image {
        average(&self.samples).expect("sample set is nonempty")
    }

    /// Mean of the first `k` samples.
    pub fn average_first(&self, k: usize) -> Result<Image> {
        if k == 0 || k > self.len() {
            return Err(Error::arg("prefix length outside 1..=N"));
        }
        average(&self.samples[..k])
    }

    pub fn std_uncertainty(&self) -> Result<Image> {
        std_uncertainty(&self.quantized())
    }

    pub fn entropy_uncertainty(&self) -> Result<Image> {
        entropy_uncertainty(&self.quantized())
    }
}

/// One reverse-process sample of `cond` per seed; all members share one
/// batched chain.
pub fn sample_ensemble<M: NoisePredictor + ?Sized>(
    model: &M,
    cond: &Image,
    schedule: &NoiseSchedule,
    mode: ReverseMode,
    seeds: &[u64],
) -> Result<SampleSet> {
    if seeds.is_empty() {
        return Err(Error::arg("ensemble needs at least one seed"));
    }
    ensure_distinct(seeds)?;
    let batch: Vec<&Image> = seeds.iter().map(|_| cond).collect();
    let out = diffusion::sample_batch(model, &Tensor::from_images(&batch)?, schedule, mode, seeds)?;
    SampleSet::new((0..seeds.len()).map(|i| out.image(i, 0)).collect(), seeds.to_vec())
}

/// Pixel-wise arithmetic mean.
pub fn average(images: &[Image]) -> Result<Image> {
    let first = images.first().ok_or_else(|| Error::arg("nothing to average"))?;
    let mut acc = Image::zeros(first.width(), first.height());
    for img in images {
        first.ensure_same_shape(img)?;
        for (a, v) in acc.data_mut().iter_mut().zip(img.data()) {
            *a += v;
        }
    }
    let k = images.len() as f64;
    acc.data_mut().iter_mut().for_each(|v| *v /= k);
    Ok(acc)
}

fn check_quantized(samples: &[Image8], min: usize) -> Result<(usize, usize)> {
    if samples.len() < min {
        return Err(Error::arg(alloc::format!("uncertainty needs at least {min} samples")));
    }
    let (w, h) = samples[0].shape();
    if let Some(s) = samples.iter().find(|s| s.shape() != (w, h)) {
        return Err(Error::Shape {
            expected: (w, h),
            found: s.shape(),
        });
    }
    Ok((w, h))
}

/// `sqrt(sum_i (y_i - mean)^2 / (255^2 N))` per pixel, in `[0, 0.5]`.
pub fn std_uncertainty(samples: &[Image8]) -> Result<Image> {
    let (w, h) = check_quantized(samples, 2)?;
    let n = samples.len() as f64;
    Ok(Image::from_fn(w, h, |x, y| {
        let mean = samples.iter().map(|s| s.get(x, y) as f64).sum::<f64>() / n;
        let ss: f64 = samples.iter().map(|s| { let d = s.get(x, y) as f64 - mean; d * d }).sum();
        libm::sqrt(ss / (255.0 * 255.0 * n))
    }))
}

/// Shannon entropy (natural log) of the empirical distribution of 8-bit
/// values across samples, per pixel; at most `ln N`.
pub fn entropy_uncertainty(samples: &[Image8]) -> Result<Image> {
    let (w, h) = check_quantized(samples, 1)?;
    let n = samples.len() as f64;
    let mut counts = [0u32; 256];
    Ok(Image::from_fn(w, h, |x, y| {
        counts.iter_mut().for_each(|c| *c = 0);
        for s in samples {
            counts[s.get(x, y) as usize] += 1;
        }
        -counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * libm::log(p)
            })
            .sum::<f64>()
    }))
}
