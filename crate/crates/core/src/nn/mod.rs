//! The noise-prediction network and its magnitude-preserving building blocks.

pub mod mp;
mod ops;
mod params;
mod tape;
mod unet;

pub use self::mp::{
    mp_concat, mp_conv2d, mp_fourier_embed, mp_silu, mp_sum, normalize_rows, SILU_RMS,
};
pub use self::params::{normalize_weights, Gradients, ParamGroup, ParamKind};
pub use self::unet::{param_count, Denoiser, DenoiserConfig};
