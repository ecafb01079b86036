//! Single-channel rasters, the 8-bit <-> [-1, 1] mapping, tiling and the
//! geometric/filtering transforms used for augmentation.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Row-major single-channel float raster.
///
/// Network-facing images hold values in `[-1, 1]`; metric-facing images hold
/// values on the 8-bit scale `[0, 255]`. The type does not track which.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Row-major single-channel 8-bit raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image8 {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::arg("pixel buffer length does not match width * height"));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.ensure_same_shape(other)?;
        Ok(Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    pub fn flip_vertical(&self) -> Image {
        Image::from_fn(self.width, self.height, |x, y| self.get(x, self.height - 1 - y))
    }

    /// Rotation by 90 degrees counter-clockwise.
    pub fn rot90(&self) -> Image {
        let (w, h) = (self.width, self.height);
        Image::from_fn(h, w, |x, y| self.get(w - 1 - y, x))
    }

    pub fn rot90_k(&self, k: usize) -> Image {
        let mut out = self.clone();
        for _ in 0..(k % 4) {
            out = out.rot90();
        }
        out
    }

    /// Crop of `w x h` pixels whose top-left corner sits at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::arg("crop window exceeds image bounds"));
        }
        Ok(Image::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Separable Gaussian blur with reflected borders. `sigma <= 0` is the identity.
    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma, libm::ceil(3.0 * sigma) as usize);
        let r = (kernel.len() / 2) as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = Image::zeros(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, &k) in kernel.iter().enumerate() {
                    let xx = reflect(x + i as isize - r, w);
                    acc += k * self.get(xx, y as usize);
                }
                tmp.set(x as usize, y as usize, acc);
            }
        }
        let mut out = Image::zeros(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, &k) in kernel.iter().enumerate() {
                    let yy = reflect(y + i as isize - r, h);
                    acc += k * tmp.get(x as usize, yy);
                }
                out.set(x as usize, y as usize, acc);
            }
        }
        out
    }
}

/// Normalized 1-D Gaussian taps on `[-radius, radius]`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            libm::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

// Half-sample symmetric reflection; degenerates gracefully for tiny images.
fn reflect(mut i: isize, n: isize) -> usize {
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

impl Image8 {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::arg("pixel buffer length does not match width * height"));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// The same pixels as floats on the 8-bit scale.
    pub fn to_f64(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    /// Rounds and clips an 8-bit-scale float image.
    pub fn from_f64_clipped(img: &Image) -> Image8 {
        Image8 {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| quantize_u8(v)).collect(),
        }
    }
}

#[inline]
fn quantize_u8(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    libm::round(v.clamp(0.0, 255.0)) as u8
}

/// Maps 8-bit values to `[-1, 1]` via `v / 127.5 - 1`.
pub fn normalize(img: &Image8) -> Image {
    Image {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| v as f64 / 127.5 - 1.0).collect(),
    }
}

/// Maps `[-1, 1]` floats back to 8-bit, clipping to `[0, 255]` before rounding.
pub fn denormalize(img: &Image) -> Image8 {
    Image8 {
        width: img.width,
        height: img.height,
        data: img
            .data
            .iter()
            .map(|&u| quantize_u8((u + 1.0) * 127.5))
            .collect(),
    }
}

/// `[-1, 1]` floats rescaled to the 8-bit range without rounding.
pub fn to_8bit_scale(img: &Image) -> Image {
    img.map(|u| ((u + 1.0) * 127.5).clamp(0.0, 255.0))
}

/// Non-overlapping `patch x patch` tiles in row-major order; the remainder
/// rows and columns are dropped.
pub fn patchify(img: &Image, patch: usize) -> Result<Vec<Image>> {
    if patch == 0 || patch > img.width || patch > img.height {
        return Err(Error::arg("patch size must be in 1..=min(width, height)"));
    }
    let (nx, ny) = (img.width / patch, img.height / patch);
    let mut out = Vec::with_capacity(nx * ny);
    for ty in 0..ny {
        for tx in 0..nx {
            out.push(img.crop(tx * patch, ty * patch, patch, patch)?);
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`] for a grid of `tiles_x` columns.
pub fn assemble(patches: &[Image], tiles_x: usize) -> Result<Image> {
    let first = patches.first().ok_or_else(|| Error::arg("no patches"))?;
    if tiles_x == 0 || patches.len() % tiles_x != 0 {
        return Err(Error::arg("patch count is not a multiple of the grid width"));
    }
    let (pw, ph) = first.shape();
    for p in patches {
        first.ensure_same_shape(p)?;
    }
    let tiles_y = patches.len() / tiles_x;
    Ok(Image::from_fn(pw * tiles_x, ph * tiles_y, |x, y| {
        patches[(y / ph) * tiles_x + x / pw].get(x % pw, y % ph)
    }))
}
