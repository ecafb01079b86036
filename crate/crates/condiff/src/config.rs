//! Run configuration: one TOML file, dotted command-line overrides, a frozen
//! resolved copy and a content hash naming the run directory.

use std::fs;
use std::path::{Path, PathBuf};

use condiff_core::data::DatasetParams;
use condiff_core::diffusion::ReverseMode;
use condiff_core::metrics::{Apodization, DecorrelationParams};
use condiff_core::trainer::TrainConfig;
use condiff_core::{DenoiserConfig, NoiseSchedule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub offset: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 200, offset: 8e-3 }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> CliResult<NoiseSchedule> {
        Ok(NoiseSchedule::cosine(self.steps, self.offset)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// Reconstructions averaged per input.
    pub samples: usize,
    /// Sample `i` of an input uses seed `seed + i`.
    pub seed: u64,
    pub sampler: ReverseMode,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            samples: 15,
            seed: 1000,
            sampler: ReverseMode::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn seeds(&self, n: usize) -> Vec<u64> {
        (0..n as u64).map(|i| self.seed + i).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApodizationKind {
    PeriodicSmooth,
    CosineTaper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub pixel_size_nm: f64,
    pub apodization: ApodizationKind,
    /// Border fraction of the cosine taper, when selected.
    pub taper_fraction: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            pixel_size_nm: 20.0,
            apodization: ApodizationKind::PeriodicSmooth,
            taper_fraction: 0.1,
        }
    }
}

impl MetricsConfig {
    pub fn decorrelation(&self) -> DecorrelationParams {
        DecorrelationParams {
            apodization: match self.apodization {
                ApodizationKind::PeriodicSmooth => Apodization::PeriodicSmooth,
                ApodizationKind::CosineTaper => Apodization::CosineTaper(self.taper_fraction),
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Parent of the hash-named run directories.
    pub runs: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { runs: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed: dataset generation and model initialization.
    pub seed: u64,
    pub data: DatasetParams,
    pub schedule: ScheduleConfig,
    pub model: DenoiserConfig,
    pub train: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub metrics: MetricsConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.schedule.build()?;
        self.model
            .check_spatial(self.data.patch, self.data.patch)
            .map_err(|e| CliError::Config(format!("data.patch incompatible with model: {e}")))?;
        if self.ensemble.samples == 0 {
            return Err(CliError::Config("ensemble.samples must be at least 1".into()));
        }
        if !(self.metrics.pixel_size_nm > 0.0) {
            return Err(CliError::Config("metrics.pixel_size_nm must be positive".into()));
        }
        Ok(())
    }

    /// Frozen TOML text of the fully resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 12 hex digits of the SHA-256 of [`RunConfig::to_toml`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..6])
    }

    pub fn run_dir(&self, out: Option<&Path>) -> PathBuf {
        match out {
            Some(p) => p.to_path_buf(),
            None => self.paths.runs.join(self.hash()),
        }
    }
}

/// A `key.path = value` override; the value is read as a TOML literal and
/// falls back to a plain string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: String,
}

fn parse_literal(s: &str) -> Value {
    format!("v = {s}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(s.to_string()))
}

fn apply_override(root: &mut Table, ov: &Override) -> CliResult<()> {
    let parts: Vec<&str> = ov.key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed override key `{}`", ov.key)));
    }
    let (last, parents) = parts.split_last().expect("nonempty");
    let mut table = root;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{}`: `{p}` is not a section", ov.key)))?;
    }
    table.insert(last.to_string(), parse_literal(&ov.value));
    Ok(())
}

fn unknown_key_message(err: &str) -> String {
    // toml reports "unknown field `x`, expected ..."; keep it verbatim
    err.trim().replace('\n', " ")
}

/// Parses the config text (empty for all defaults), applies the overrides
/// in order and validates the result.
pub fn resolve(text: &str, overrides: &[Override]) -> CliResult<RunConfig> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(unknown_key_message(&e.to_string())))?;
    for ov in overrides {
        apply_override(&mut table, ov)?;
    }
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(unknown_key_message(&e.to_string())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: Option<&Path>, overrides: &[Override]) -> CliResult<RunConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    resolve(&text, overrides)
}

/// Splits `--a.b value` and `--a.b=value` pairs (keys containing a dot) out
/// of `args`, returning the remaining arguments and the overrides.
pub fn extract_overrides(args: Vec<String>) -> CliResult<(Vec<String>, Vec<Override>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--").filter(|b| b.split('=').next().is_some_and(|k| k.contains('.'))) else {
            rest.push(a);
            continue;
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("override `--{body}` needs a value")))?;
                (body.to_string(), v)
            }
        };
        overrides.push(Override { key, value });
    }
    Ok((rest, overrides))
}
