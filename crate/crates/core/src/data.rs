//! Synthetic paired data: filament phantoms standing in for high-dose
//! acquisitions, a Poisson-Gaussian low-dose degradation with coarse
//! quantization, and phantom-disjoint train/val/test splits of patches.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::image::patchify;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Image, Image8, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PhantomParams {
    /// Side length in pixels.
    pub size: usize,
    pub min_filaments: usize,
    pub max_filaments: usize,
    /// Gaussian PSF width in pixels.
    pub filament_width: f64,
    /// Peak filament intensity range on the 8-bit scale.
    pub min_intensity: f64,
    pub max_intensity: f64,
    pub background: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            size: 64,
            min_filaments: 6,
            max_filaments: 12,
            filament_width: 1.2,
            min_intensity: 120.0,
            max_intensity: 230.0,
            background: 20.0,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(Error::config("phantom size must be at least 32"));
        }
        if self.min_filaments > self.max_filaments {
            return Err(Error::config("min_filaments exceeds max_filaments"));
        }
        if !(self.filament_width > 0.0) {
            return Err(Error::config("filament_width must be positive"));
        }
        let in_range = |v: f64| (0.0..=255.0).contains(&v);
        if !(in_range(self.min_intensity) && in_range(self.max_intensity) && in_range(self.background)) {
            return Err(Error::config("intensities must lie in [0, 255]"));
        }
        if self.min_intensity > self.max_intensity {
            return Err(Error::config("min_intensity exceeds max_intensity"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct DoseParams {
    /// Expected photon count at full scale (255).
    pub photon_scale: f64,
    /// Standard deviation of the additive read noise, 8-bit units.
    pub read_noise_sigma: f64,
    /// Number of uniformly spaced output levels on `[0, 255]`.
    pub quantization_levels: usize,
}

impl Default for DoseParams {
    fn default() -> Self {
        Self {
            photon_scale: 12.0,
            read_noise_sigma: 4.0,
            quantization_levels: 16,
        }
    }
}

impl DoseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.photon_scale > 0.0 && self.photon_scale.is_finite()) {
            return Err(Error::config("photon_scale must be positive"));
        }
        if !(self.read_noise_sigma >= 0.0) {
            return Err(Error::config("read_noise_sigma must be non-negative"));
        }
        if !(2..=256).contains(&self.quantization_levels) {
            return Err(Error::config("quantization_levels must lie in 2..=256"));
        }
        Ok(())
    }
}

/// Catmull-Rom interpolation through `pts`, sampled every `step` pixels.
fn spline(pts: &[(f64, f64)], step: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..pts.len().saturating_sub(1) {
        let p0 = pts[i.saturating_sub(1)];
        let (p1, p2) = (pts[i], pts[i + 1]);
        let p3 = pts[(i + 2).min(pts.len() - 1)];
        let len = libm::hypot(p2.0 - p1.0, p2.1 - p1.1);
        let n = libm::ceil(len / step).max(1.0) as usize;
        for k in 0..n {
            let t = k as f64 / n as f64;
            let (t2, t3) = (t * t, t * t * t);
            let f = |a: f64, b: f64, c: f64, d: f64| {
                0.5 * (2.0 * b + (c - a) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (3.0 * b - a - 3.0 * c + d) * t3)
            };
            out.push((f(p0.0, p1.0, p2.0, p3.0), f(p0.1, p1.1, p2.1, p3.1)));
        }
    }
    out
}

/// Bilinear deposit of `weight` at `(x, y)`.
fn splat(acc: &mut [f64], size: usize, x: f64, y: f64, weight: f64) {
    let (fx, fy) = (libm::floor(x), libm::floor(y));
    let (dx, dy) = (x - fx, y - fy);
    for (ox, wx) in [(0, 1.0 - dx), (1, dx)] {
        for (oy, wy) in [(0, 1.0 - dy), (1, dy)] {
            let (px, py) = (fx as i64 + ox, fy as i64 + oy);
            if px >= 0 && py >= 0 && (px as usize) < size && (py as usize) < size {
                acc[py as usize * size + px as usize] += weight * wx * wy;
            }
        }
    }
}

/// Random smooth filaments (random-walk control points joined by a spline)
/// blurred by a Gaussian PSF over a constant background, clipped to
/// `[0, 255]`. Deterministic in `seed`.
pub fn generate_phantom(seed: u64, params: &PhantomParams) -> Result<Image> {
    params.validate()?;
    let n = params.size;
    let mut rng = seeded(seed);
    let count = rng.random_range(params.min_filaments..=params.max_filaments);
    const STEP: f64 = 0.25;
    let mut total = alloc::vec![0.0; n * n];
    for _ in 0..count {
        let amplitude = rng.random_range(params.min_intensity..=params.max_intensity);
        let mut p = (rng.random_range(0.0..n as f64), rng.random_range(0.0..n as f64));
        let mut heading = rng.random_range(0.0..2.0 * PI);
        let stride = n as f64 / 8.0;
        let mut pts = alloc::vec![p];
        for _ in 0..rng.random_range(6..=14) {
            heading += rng.random_range(-0.6..0.6);
            p = (p.0 + stride * libm::cos(heading), p.1 + stride * libm::sin(heading));
            pts.push(p);
        }
        // unit line density, scaled so the blurred ridge peaks near `amplitude`
        let weight = STEP * amplitude * libm::sqrt(2.0 * PI) * params.filament_width;
        for (x, y) in spline(&pts, STEP) {
            splat(&mut total, n, x, y, weight);
        }
    }
    let density = Image::new(n, n, total)?.gaussian_blur(params.filament_width);
    Ok(density.map(|v| (params.background + v).clamp(0.0, 255.0)))
}

/// Poisson photon counts at `clean / 255 * photon_scale`, rescaled to the
/// 8-bit range, plus Gaussian read noise; not yet quantized or clipped.
pub fn degrade_signal<R: Rng + ?Sized>(clean: &Image, dose: &DoseParams, rng: &mut R) -> Result<Image> {
    dose.validate()?;
    if clean.data().iter().any(|v| !(0.0..=255.0).contains(v)) {
        return Err(Error::Contract("clean image outside [0, 255]".into()));
    }
    let read = Normal::new(0.0, dose.read_noise_sigma).map_err(|_| Error::config("bad read noise"))?;
    let mut out = clean.clone();
    for v in out.data_mut() {
        let lambda = *v / 255.0 * dose.photon_scale;
        let photons = if lambda > 0.0 {
            Poisson::new(lambda).map_err(|_| Error::Degenerate("Poisson rate"))?.sample(rng)
        } else {
            0.0
        };
        *v = photons / dose.photon_scale * 255.0 + read.sample(rng);
    }
    Ok(out)
}

/// Nearest of `levels` uniformly spaced values on `[0, 255]`, after clipping.
pub fn quantize(img: &Image, levels: usize) -> Image8 {
    let step = 255.0 / (levels - 1) as f64;
    Image8::from_f64_clipped(&img.map(|v| libm::round(v.clamp(0.0, 255.0) / step) * step))
}

/// Full low-dose simulation: [`degrade_signal`] followed by [`quantize`].
pub fn degrade<R: Rng + ?Sized>(clean: &Image, dose: &DoseParams, rng: &mut R) -> Result<Image8> {
    Ok(quantize(&degrade_signal(clean, dose, rng)?, dose.quantization_levels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct DatasetParams {
    pub phantom: PhantomParams,
    pub dose: DoseParams,
    /// Side of the square patches cut from each phantom.
    pub patch: usize,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub test_pairs: usize,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            phantom: PhantomParams::default(),
            dose: DoseParams::default(),
            patch: 32,
            train_pairs: 300,
            val_pairs: 30,
            test_pairs: 30,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.dose.validate()?;
        if self.patch == 0 || self.patch > self.phantom.size {
            return Err(Error::config("patch must lie in 1..=phantom.size"));
        }
        if self.train_pairs == 0 || self.val_pairs == 0 || self.test_pairs == 0 {
            return Err(Error::config("every split needs at least one pair"));
        }
        Ok(())
    }

    pub fn patches_per_phantom(&self) -> usize {
        let k = self.phantom.size / self.patch;
        k * k
    }

    pub fn pairs(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_pairs,
            Split::Val => self.val_pairs,
            Split::Test => self.test_pairs,
        }
    }
}

/// Provenance of one pair: enough to regenerate it bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub id: usize,
    pub split: Split,
    /// Global phantom index; each phantom belongs to exactly one split.
    pub phantom: usize,
    pub seed: u64,
    /// Row-major patch index within the phantom.
    pub patch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub record: PairRecord,
    pub low: Image8,
    pub high: Image8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub pairs: Vec<Pair>,
}

impl PairedDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Pair> {
        self.pairs.iter().filter(move |p| p.record.split == split)
    }
}

/// Clean and degraded full-size phantom for one phantom seed.
pub fn render_phantom_pair(seed: u64, params: &DatasetParams) -> Result<(Image8, Image8)> {
    let clean = Image8::from_f64_clipped(&generate_phantom(seed, &params.phantom)?);
    let mut rng = seeded(derive_seed(seed, 1));
    let low = degrade(&clean.to_f64(), &params.dose, &mut rng)?;
    Ok((low, clean))
}

fn cut(img: &Image8, patch: usize) -> Result<Vec<Image8>> {
    Ok(patchify(&img.to_f64(), patch)?.iter().map(Image8::from_f64_clipped).collect())
}

/// Manifest entries for all splits in output order: phantoms are numbered
/// consecutively across splits and each contributes its patches to one
/// split only.
pub fn plan_dataset(params: &DatasetParams, master_seed: u64) -> Result<Vec<PairRecord>> {
    params.validate()?;
    let per = params.patches_per_phantom();
    let mut records = Vec::new();
    let mut phantom = 0;
    for split in Split::ALL {
        let wanted = params.pairs(split);
        for k in 0..wanted {
            let ph = phantom + k / per;
            records.push(PairRecord {
                id: records.len(),
                split,
                phantom: ph,
                seed: derive_seed(master_seed, ph as u64),
                patch: k % per,
            });
        }
        phantom += wanted.div_ceil(per);
    }
    Ok(records)
}

/// Renders the pairs listed in `records`; records of one phantom share a
/// single rendering.
pub fn render_records(records: &[PairRecord], params: &DatasetParams) -> Result<PairedDataset> {
    params.validate()?;
    let mut pairs = Vec::with_capacity(records.len());
    let mut cache: Option<(usize, u64, Vec<Image8>, Vec<Image8>)> = None;
    for rec in records {
        let hit = matches!(&cache, Some((ph, seed, _, _)) if *ph == rec.phantom && *seed == rec.seed);
        if !hit {
            let (low, high) = render_phantom_pair(rec.seed, params)?;
            cache = Some((rec.phantom, rec.seed, cut(&low, params.patch)?, cut(&high, params.patch)?));
        }
        let (_, _, lows, highs) = cache.as_ref().expect("filled above");
        if rec.patch >= lows.len() {
            return Err(Error::arg(alloc::format!("patch index {} out of range", rec.patch)));
        }
        pairs.push(Pair {
            record: rec.clone(),
            low: lows[rec.patch].clone(),
            high: highs[rec.patch].clone(),
        });
    }
    Ok(PairedDataset { pairs })
}

pub fn build_dataset(params: &DatasetParams, master_seed: u64) -> Result<PairedDataset> {
    render_records(&plan_dataset(params, master_seed)?, params)
}
