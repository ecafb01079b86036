//! Dense activations stored channel-major: `[channels, batch, height, width]`.
//!
//! Keeping every batch entry of one channel adjacent lets a convolution run as
//! a single matrix product over the whole batch.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Image, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::arg("tensor buffer length does not match its shape"));
        }
        Ok(Self { n, c, h, w, data })
    }

    /// Stacks single-channel images into a `[len, 1, h, w]` batch.
    pub fn from_images(images: &[&Image]) -> Result<Self> {
        let first = images.first().ok_or_else(|| Error::arg("empty image batch"))?;
        let (w, h) = first.shape();
        let mut data = Vec::with_capacity(images.len() * w * h);
        for img in images {
            first.ensure_same_shape(img)?;
            data.extend_from_slice(img.data());
        }
        Ok(Self {
            n: images.len(),
            c: 1,
            h,
            w,
            data,
        })
    }

    /// Offset of the plane holding batch entry `i` of channel `ch`.
    #[inline]
    pub fn plane_offset(&self, i: usize, ch: usize) -> usize {
        (ch * self.n + i) * self.plane()
    }

    /// Image for batch entry `i`, channel `ch`.
    pub fn image(&self, i: usize, ch: usize) -> Image {
        let off = self.plane_offset(i, ch);
        Image::new(self.w, self.h, self.data[off..off + self.plane()].to_vec()).expect("plane size")
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n, self.c, self.h, self.w)
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn rms(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64)
    }

    /// Channel-wise concatenation of two tensors with equal batch and spatial sizes.
    pub fn concat_channels(a: &Tensor, wa: f64, b: &Tensor, wb: f64) -> Tensor {
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend(a.data.iter().map(|v| wa * v));
        data.extend(b.data.iter().map(|v| wb * v));
        Tensor {
            n: a.n,
            c: a.c + b.c,
            h: a.h,
            w: a.w,
            data,
        }
    }

    /// Splits channels `[0, ca)` and `[ca, c)`, scaling each part.
    pub fn split_channels(&self, ca: usize, wa: f64, wb: f64) -> (Tensor, Tensor) {
        let cut = ca * self.n * self.plane();
        let part = |src: &[f64], c: usize, k: f64| Tensor {
            n: self.n,
            c,
            h: self.h,
            w: self.w,
            data: src.iter().map(|v| k * v).collect(),
        };
        (
            part(&self.data[..cut], ca, wa),
            part(&self.data[cut..], self.c - ca, wb),
        )
    }
}
