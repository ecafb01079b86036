//! CSV serialization of metric reports, Mood's test tables and training
//! histories. Undefined values are written as empty cells; floats use the
//! shortest representation that reads back to the same bits.

use std::path::Path;

use condiff_core::metrics::{ImageMetrics, MetricKind, MetricReport, MoodTest};
use condiff_core::trainer::TrainHistory;

use crate::error::{CliError, CliResult};
use crate::io::write_file;

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>, path: &Path) -> CliResult<()> {
    let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    write_file(path, &bytes)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Other(e.to_string())
}

/// One row per image: `name`, every metric, `ms_ssim_scales`.
pub fn write_per_image(report: &MetricReport, path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["name".to_string()];
    header.extend(MetricKind::ALL.iter().map(|k| k.name().to_string()));
    header.push("ms_ssim_scales".into());
    w.write_record(&header).map_err(csv_err)?;
    for row in &report.rows {
        let mut rec = vec![row.name.clone()];
        rec.extend(MetricKind::ALL.iter().map(|&k| cell(row.get(k))));
        rec.push(row.ms_ssim_scales.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w, path)
}

/// Reads a file written by [`write_per_image`].
pub fn read_per_image(path: &Path) -> CliResult<Vec<ImageMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let mut values = [None; 8];
        for (i, v) in values.iter_mut().enumerate() {
            let s = rec.get(i + 1).unwrap_or("");
            *v = if s.is_empty() {
                None
            } else {
                Some(s.parse().map_err(|_| CliError::Other(format!("bad number `{s}`")))?)
            };
        }
        rows.push(ImageMetrics {
            name: rec.get(0).unwrap_or("").to_string(),
            values,
            ms_ssim_scales: rec.get(9).and_then(|s| s.parse().ok()).unwrap_or(0),
        });
    }
    Ok(rows)
}

/// `metric, median, count`.
pub fn write_summary(report: &MetricReport, path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "median", "count"]).map_err(csv_err)?;
    for k in MetricKind::ALL {
        let count = report.summary.counts[MetricKind::ALL.iter().position(|&x| x == k).expect("listed")];
        w.write_record([k.name().to_string(), cell(report.summary.median(k)), count.to_string()])
            .map_err(csv_err)?;
    }
    finish(w, path)
}

/// `metric, pooled_median, above_a, below_a, above_b, below_b, chi_square, p_value`;
/// empty cells where the test is undefined.
pub fn write_mood(tests: &[(MetricKind, Option<MoodTest>)], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "pooled_median", "above_a", "below_a", "above_b", "below_b", "chi_square", "p_value"])
        .map_err(csv_err)?;
    for (k, t) in tests {
        let rec = match t {
            Some(t) => vec![
                k.name().to_string(),
                t.pooled_median.to_string(),
                t.above[0].to_string(),
                t.below[0].to_string(),
                t.above[1].to_string(),
                t.below[1].to_string(),
                t.chi_square.to_string(),
                t.p_value.to_string(),
            ],
            None => {
                let mut v = vec![k.name().to_string()];
                v.extend(std::iter::repeat_n(String::new(), 7));
                v
            }
        };
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w, path)
}

/// `epoch, train_loss, val_mae`; epoch 0 holds the untrained validation MAE.
pub fn write_history(history: &TrainHistory, path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_mae"]).map_err(csv_err)?;
    w.write_record(["0".to_string(), String::new(), history.initial_val_mae.to_string()])
        .map_err(csv_err)?;
    for e in &history.epochs {
        w.write_record([e.epoch.to_string(), e.train_loss.to_string(), cell(e.val_mae)])
            .map_err(csv_err)?;
    }
    finish(w, path)
}
