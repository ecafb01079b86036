//! Conditional denoising diffusion for paired image restoration.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! pipeline: the cosine variance schedule, the magnitude-preserving U-Net noise
//! predictor with its reverse-mode gradients, the DDPM training objective and
//! sampler, the optimizer loop, ensemble averaging with uncertainty maps, the
//! image-quality metric suite and a synthetic low/high-dose data generator.
//!
//! File formats, configuration parsing and the command-line front end live in
//! the `condiff` companion crate.

#![no_std]
#![deny(unsafe_code)]
// `!(x > 0.0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod data;
pub mod diffusion;
pub mod ensemble;
mod error;
pub mod fft;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod trainer;

pub use crate::error::{Error, Result};
pub use crate::image::{Image, Image8};
pub use crate::nn::{Denoiser, DenoiserConfig};
pub use crate::schedule::NoiseSchedule;
pub use crate::tensor::Tensor;
