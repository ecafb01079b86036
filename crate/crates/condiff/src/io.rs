//! Single-channel 8-bit PNG and TIFF reading and writing, plus float sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use condiff_core::Image8;
use image::{ColorType, GrayImage, ImageFormat, ImageReader};
use serde::Serialize;

use crate::error::{CliError, CliResult};

const EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

fn format_for(path: &Path) -> CliResult<ImageFormat> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("tif" | "tiff") => Ok(ImageFormat::Tiff),
        _ => Err(CliError::MissingData(format!(
            "{}: unsupported image extension (expected .png, .tif or .tiff)",
            path.display()
        ))),
    }
}

fn depth_name(c: ColorType) -> String {
    format!("{c:?} ({} bits per pixel, {} channels)", c.bits_per_pixel(), c.channel_count())
}

/// Reads an 8-bit grayscale PNG or TIFF. Anything else is rejected with the
/// offending pixel layout in the message.
pub fn load_image(path: &Path) -> CliResult<Image8> {
    let format = format_for(path)?;
    let mut reader = ImageReader::open(path).map_err(|e| CliError::io(path, e))?;
    reader.set_format(format);
    let img = reader
        .decode()
        .map_err(|e| CliError::MissingData(format!("{}: cannot decode: {e}", path.display())))?;
    if img.color() != ColorType::L8 {
        return Err(CliError::MissingData(format!(
            "{}: unsupported pixel format {}; expected 8-bit single-channel",
            path.display(),
            depth_name(img.color())
        )));
    }
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    Ok(Image8::new(w as usize, h as usize, gray.into_raw())?)
}

/// Writes `img` as PNG or uncompressed TIFF, chosen by extension; parent
/// directories are created.
pub fn save_image(img: &Image8, path: &Path) -> CliResult<()> {
    let format = format_for(path)?;
    ensure_parent(path)?;
    let buf = GrayImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .ok_or_else(|| CliError::Other("image buffer size mismatch".into()))?;
    buf.save_with_format(path, format)
        .map_err(|e| CliError::Other(format!("{}: cannot encode: {e}", path.display())))
}

pub fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::MissingData(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        if p.is_file() && is_image_path(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Float map stored next to its 8-bit rendering: the true value range and
/// every value in row-major order.
#[derive(Debug, Serialize)]
pub struct FloatSidecar<'a> {
    pub kind: &'a str,
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
    /// Largest value the quantity can take, when bounded.
    pub theoretical_max: Option<f64>,
    pub values: &'a [f64],
}

/// Affine map of `values` from `[min, max]` onto `0..=255`; a constant map
/// renders black.
pub fn rescale_to_8bit(width: usize, height: usize, values: &[f64]) -> CliResult<(Image8, f64, f64)> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    let data = values
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    Ok((Image8::new(width, height, data)?, lo, hi))
}

/// Writes `<stem>.png` (rescaled) and `<stem>.json` (raw floats).
pub fn save_float_map(
    dir: &Path,
    stem: &str,
    width: usize,
    height: usize,
    values: &[f64],
    theoretical_max: Option<f64>,
) -> CliResult<()> {
    let (img, min, max) = rescale_to_8bit(width, height, values)?;
    save_image(&img, &dir.join(format!("{stem}.png")))?;
    let sidecar = FloatSidecar {
        kind: stem,
        width,
        height,
        min,
        max,
        theoretical_max,
        values,
    };
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| CliError::Other(e.to_string()))?;
    write_file(&dir.join(format!("{stem}.json")), &json)
}
