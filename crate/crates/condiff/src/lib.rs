//! File formats, configuration and the command-line pipeline around
//! `condiff-core`: synthetic dataset directories, PNG/TIFF image IO, binary
//! checkpoints, metric and history CSVs, and the `synth`, `train`, `denoise`
//! and `evaluate` commands.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
pub mod report;

pub use error::{CliError, CliResult};
