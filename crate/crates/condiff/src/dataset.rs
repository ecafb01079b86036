//! Dataset directories: `<root>/{train,val,test}/{low,high}/NNNN.png`, a
//! `manifest.csv` with the provenance of every pair and `dataset.toml` with
//! the generator parameters. The manifest alone regenerates every file.

use std::fs;
use std::path::{Path, PathBuf};

use condiff_core::data::{render_records, DatasetParams, Pair, PairRecord, PairedDataset, Split};
use condiff_core::Image8;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{load_image, save_image, write_file};

pub const MANIFEST: &str = "manifest.csv";
pub const PARAMS: &str = "dataset.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: usize,
    pub split: String,
    pub file: String,
    pub phantom: usize,
    pub seed: u64,
    pub patch: usize,
    pub photon_scale: f64,
    pub read_noise_sigma: f64,
    pub quantization_levels: usize,
}

/// File name of a pair inside its split directories.
pub fn file_name(index_in_split: usize) -> String {
    format!("{index_in_split:04}.png")
}

pub fn pair_paths(root: &Path, split: Split, file: &str) -> (PathBuf, PathBuf) {
    let dir = root.join(split.name());
    (dir.join("low").join(file), dir.join("high").join(file))
}

fn manifest_rows(ds: &PairedDataset, params: &DatasetParams) -> Vec<ManifestRow> {
    let mut counters = [0usize; 3];
    ds.pairs
        .iter()
        .map(|p| {
            let k = Split::ALL.iter().position(|s| *s == p.record.split).expect("known split");
            let file = file_name(counters[k]);
            counters[k] += 1;
            ManifestRow {
                id: p.record.id,
                split: p.record.split.name().to_string(),
                file,
                phantom: p.record.phantom,
                seed: p.record.seed,
                patch: p.record.patch,
                photon_scale: params.dose.photon_scale,
                read_noise_sigma: params.dose.read_noise_sigma,
                quantization_levels: params.dose.quantization_levels,
            }
        })
        .collect()
}

/// Writes all pair images, the manifest and the parameter file.
pub fn write_dataset(root: &Path, ds: &PairedDataset, params: &DatasetParams) -> CliResult<()> {
    let rows = manifest_rows(ds, params);
    for (row, pair) in rows.iter().zip(&ds.pairs) {
        let (low, high) = pair_paths(root, pair.record.split, &row.file);
        save_image(&pair.low, &low)?;
        save_image(&pair.high, &high)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(|e| CliError::Other(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    write_file(&root.join(MANIFEST), &bytes)?;
    let text = toml::to_string(params).map_err(|e| CliError::Other(e.to_string()))?;
    write_file(&root.join(PARAMS), text.as_bytes())
}

pub fn read_manifest(root: &Path) -> CliResult<Vec<ManifestRow>> {
    let path = root.join(MANIFEST);
    let mut r = csv::Reader::from_path(&path).map_err(|e| CliError::MissingData(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<ManifestRow>, _>>()
        .map_err(|e| CliError::MissingData(format!("{}: {e}", path.display())))
}

pub fn read_params(root: &Path) -> CliResult<DatasetParams> {
    let path = root.join(PARAMS);
    let text = fs::read_to_string(&path).map_err(|e| CliError::MissingData(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::MissingData(format!("{}: {e}", path.display())))
}

fn parse_split(s: &str) -> CliResult<Split> {
    Split::parse(s).ok_or_else(|| CliError::MissingData(format!("unknown split `{s}` in manifest")))
}

/// Loads every pair listed in the manifest from disk.
pub fn load_dataset(root: &Path) -> CliResult<PairedDataset> {
    let rows = read_manifest(root)?;
    let mut pairs = Vec::with_capacity(rows.len());
    for row in rows {
        let split = parse_split(&row.split)?;
        let (low, high) = pair_paths(root, split, &row.file);
        let (low, high) = (load_image(&low)?, load_image(&high)?);
        if low.shape() != high.shape() {
            return Err(CliError::Shape(format!("pair {} has mismatched shapes", row.file)));
        }
        pairs.push(Pair {
            record: PairRecord {
                id: row.id,
                split,
                phantom: row.phantom,
                seed: row.seed,
                patch: row.patch,
            },
            low,
            high,
        });
    }
    Ok(PairedDataset { pairs })
}

/// Re-renders the pairs listed in the manifest from their seeds.
pub fn regenerate(root: &Path) -> CliResult<PairedDataset> {
    let mut params = read_params(root)?;
    let rows = read_manifest(root)?;
    if let Some(r) = rows.first() {
        params.dose.photon_scale = r.photon_scale;
        params.dose.read_noise_sigma = r.read_noise_sigma;
        params.dose.quantization_levels = r.quantization_levels;
    }
    let records = rows
        .iter()
        .map(|r| {
            Ok(PairRecord {
                id: r.id,
                split: parse_split(&r.split)?,
                phantom: r.phantom,
                seed: r.seed,
                patch: r.patch,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(render_records(&records, &params)?)
}

/// Low/high images of one split in manifest order.
pub fn split_images(ds: &PairedDataset, split: Split) -> Vec<(&Image8, &Image8)> {
    ds.split(split).map(|p| (&p.low, &p.high)).collect()
}
