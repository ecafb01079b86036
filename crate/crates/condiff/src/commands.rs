//! The `synth`, `train`, `denoise` and `evaluate` commands as library calls.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use condiff_core::data::{build_dataset, Split};
use condiff_core::ensemble::sample_ensemble;
use condiff_core::image::normalize;
use condiff_core::metrics::{evaluate_pair, MetricReport, SsimParams};
use condiff_core::rng::derive_seed;
use condiff_core::trainer::{self, EpochRecord, TrainHistory, TrainPair};
use condiff_core::{Denoiser, Image8};
use rayon::prelude::*;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset::{self, MANIFEST};
use crate::error::{CliError, CliResult};
use crate::io::{list_images, load_image, save_float_map, save_image, write_file};
use crate::report;

/// Stream index of the model initialization seed under the master seed.
const MODEL_INIT_STREAM: u64 = 0x4d4f44454c;

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const HISTORY: &str = "history.csv";

/// Resolved configuration plus the directory all outputs go under.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub run_dir: PathBuf,
}

impl Context {
    pub fn new(config: RunConfig, out: Option<&Path>) -> Self {
        let run_dir = config.run_dir(out);
        Self { config, run_dir }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.run_dir.join("dataset")
    }

    pub fn train_dir(&self) -> PathBuf {
        self.run_dir.join("train")
    }

    fn freeze_config(&self, dir: &Path) -> CliResult<()> {
        write_file(&dir.join(RESOLVED_CONFIG), self.config.to_toml().as_bytes())
    }
}

/// Generates the synthetic dataset into `<run>/dataset`.
pub fn synth(ctx: &Context) -> CliResult<PathBuf> {
    let dir = ctx.dataset_dir();
    let ds = build_dataset(&ctx.config.data, ctx.config.seed)?;
    dataset::write_dataset(&dir, &ds, &ctx.config.data)?;
    ctx.freeze_config(&dir)?;
    Ok(dir)
}

pub fn initial_model(cfg: &RunConfig) -> CliResult<Denoiser> {
    Ok(Denoiser::new(cfg.model.clone(), derive_seed(cfg.seed, MODEL_INIT_STREAM))?)
}

fn to_pairs(ds: &condiff_core::data::PairedDataset, split: Split) -> Vec<TrainPair> {
    ds.split(split)
        .map(|p| TrainPair {
            x: normalize(&p.low),
            y0: normalize(&p.high),
        })
        .collect()
}

pub struct TrainOutcome {
    pub model: Denoiser,
    pub history: TrainHistory,
    pub checkpoint: PathBuf,
}

/// Trains on the dataset at `data` (default `<run>/dataset`), optionally
/// starting from the weights in `resume`, and writes the best checkpoint and
/// the history CSV into `<run>/train`.
pub fn train(
    ctx: &Context,
    data: Option<&Path>,
    resume: Option<&Path>,
    observer: impl FnMut(&EpochRecord),
) -> CliResult<TrainOutcome> {
    let cfg = &ctx.config;
    let root = data.map(Path::to_path_buf).unwrap_or_else(|| ctx.dataset_dir());
    if !root.join(MANIFEST).is_file() {
        return Err(CliError::MissingData(format!("no dataset manifest under {}", root.display())));
    }
    let ds = dataset::load_dataset(&root)?;
    let (train_set, val_set) = (to_pairs(&ds, Split::Train), to_pairs(&ds, Split::Val));
    if train_set.is_empty() || val_set.is_empty() {
        return Err(CliError::MissingData(format!("{}: empty train or val split", root.display())));
    }
    let model = match resume {
        Some(p) => {
            let m = checkpoint::load(p)?;
            if *m.config() != cfg.model {
                return Err(CliError::Checkpoint(format!(
                    "{}: model config differs from the run config",
                    p.display()
                )));
            }
            m
        }
        None => initial_model(cfg)?,
    };
    for p in train_set.iter().chain(&val_set) {
        model
            .config()
            .check_spatial(p.x.width(), p.x.height())
            .map_err(|e| CliError::Shape(e.to_string()))?;
    }
    let schedule = cfg.schedule.build()?;
    let (model, history) = trainer::train(model, &train_set, &val_set, &schedule, &cfg.train, observer)?;
    let dir = ctx.train_dir();
    let ckpt = dir.join(CHECKPOINT);
    checkpoint::save(&model, &ckpt)?;
    report::write_history(&history, &dir.join(HISTORY))?;
    ctx.freeze_config(&dir)?;
    Ok(TrainOutcome {
        model,
        history,
        checkpoint: ckpt,
    })
}

/// Ensemble size and seeds from the command line: explicit seeds must match
/// an explicit size; seeds alone set the size.
pub fn resolve_seeds(cfg: &RunConfig, n: Option<usize>, seeds: Option<Vec<u64>>) -> CliResult<Vec<u64>> {
    match (n, seeds) {
        (Some(0), _) => Err(CliError::Config("--ensemble must be at least 1".into())),
        (Some(n), Some(s)) if s.len() != n => Err(CliError::Config(format!(
            "--seeds lists {} seeds but --ensemble is {n}",
            s.len()
        ))),
        (_, Some(s)) if s.is_empty() => Err(CliError::Config("--seeds is empty".into())),
        (_, Some(s)) => {
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != s.len() {
                return Err(CliError::Config("--seeds contains duplicates".into()));
            }
            Ok(s)
        }
        (n, None) => Ok(cfg.ensemble.seeds(n.unwrap_or(cfg.ensemble.samples))),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

/// Expands directories into their image files.
pub fn collect_inputs(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(list_images(p)?);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(CliError::MissingData(format!("{}: no such file or directory", p.display())));
        }
    }
    if out.is_empty() {
        return Err(CliError::MissingData("no input images".into()));
    }
    Ok(out)
}

/// Writes, per input, every sample, the float average and both uncertainty
/// maps under `<run>/denoise/<stem>/`. Returns the output directories.
pub fn denoise(ctx: &Context, inputs: &[PathBuf], checkpoint_path: Option<&Path>, seeds: &[u64]) -> CliResult<Vec<PathBuf>> {
    let ckpt = checkpoint_path.map(Path::to_path_buf).unwrap_or_else(|| ctx.train_dir().join(CHECKPOINT));
    let model = checkpoint::load(&ckpt)?;
    let schedule = ctx.config.schedule.build()?;
    let files = collect_inputs(inputs)?;
    let images = files.iter().map(|p| load_image(p)).collect::<CliResult<Vec<Image8>>>()?;
    for (p, img) in files.iter().zip(&images) {
        model
            .config()
            .check_spatial(img.width(), img.height())
            .map_err(|e| CliError::Shape(format!("{}: {e}", p.display())))?;
    }
    let out_root = ctx.run_dir.join("denoise");
    let mode = ctx.config.ensemble.sampler;
    let dirs = files
        .par_iter()
        .zip(images.par_iter())
        .map(|(path, img)| {
            let dir = out_root.join(stem(path));
            let set = sample_ensemble(&model, &normalize(img), &schedule, mode, seeds)?;
            let (w, h) = img.shape();
            for (seed, q) in set.seeds().iter().zip(set.quantized()) {
                save_image(&q, &dir.join(format!("sample_{seed}.png")))?;
            }
            let avg = set.average();
            save_image(&condiff_core::image::denormalize(&avg), &dir.join("average.png"))?;
            let avg_8bit = condiff_core::image::to_8bit_scale(&avg);
            let json = serde_json::to_vec_pretty(&serde_json::json!({
                "kind": "average",
                "width": w,
                "height": h,
                "scale": "8-bit intensity",
                "values": avg_8bit.data(),
            }))
            .map_err(|e| CliError::Other(e.to_string()))?;
            write_file(&dir.join("average.json"), &json)?;
            if set.len() >= 2 {
                save_float_map(&dir, "std", w, h, set.std_uncertainty()?.data(), Some(0.5))?;
            }
            let ln_n = (set.len() as f64).ln();
            save_float_map(&dir, "entropy", w, h, set.entropy_uncertainty()?.data(), Some(ln_n))?;
            Ok(dir)
        })
        .collect::<CliResult<Vec<PathBuf>>>()?;
    ctx.freeze_config(&out_root)?;
    Ok(dirs)
}

fn index_by_name(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::MissingData(format!("{}: not a directory", dir.display())));
    }
    Ok(list_images(dir)?
        .into_iter()
        .map(|p| (p.file_name().expect("listed file").to_string_lossy().into_owned(), p))
        .collect())
}

/// Pairs files of equal name; any file without a partner is an error.
pub fn match_files(gt: &Path, pred: &Path) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    let (a, b) = (index_by_name(gt)?, index_by_name(pred)?);
    let unmatched: Vec<String> = a
        .keys()
        .filter(|k| !b.contains_key(*k))
        .map(|k| format!("{k} (only in {})", gt.display()))
        .chain(b.keys().filter(|k| !a.contains_key(*k)).map(|k| format!("{k} (only in {})", pred.display())))
        .collect();
    if !unmatched.is_empty() {
        return Err(CliError::Pairing(format!("unmatched files: {}", unmatched.join(", "))));
    }
    if a.is_empty() {
        return Err(CliError::MissingData(format!("{}: no images", gt.display())));
    }
    Ok(a.into_iter().map(|(k, g)| (k.clone(), g, b[&k].clone())).collect())
}

/// Metrics of every prediction in `pred` against the equally named ground
/// truth in `gt`, in name order.
pub fn evaluate_dirs(cfg: &RunConfig, gt: &Path, pred: &Path, pixel_size: f64) -> CliResult<MetricReport> {
    let pairs = match_files(gt, pred)?;
    let ssim = SsimParams::default();
    let decorr = cfg.metrics.decorrelation();
    let rows = pairs
        .par_iter()
        .map(|(name, g, p)| {
            let (g, p) = (load_image(g)?, load_image(p)?);
            if g.shape() != p.shape() {
                return Err(CliError::Shape(format!("{name}: {:?} vs {:?}", g.shape(), p.shape())));
            }
            Ok(evaluate_pair(name.clone(), &g.to_f64(), &p.to_f64(), pixel_size, &ssim, &decorr)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(MetricReport::new(rows))
}

pub struct EvaluateOutcome {
    pub report: MetricReport,
    pub compare: Option<MetricReport>,
    pub dir: PathBuf,
}

/// Writes `metrics.csv` and `summary.csv` (plus `metrics_b.csv`,
/// `summary_b.csv` and `mood.csv` when a second prediction directory is
/// given) under `<run>/evaluate`.
pub fn evaluate(ctx: &Context, gt: &Path, pred: &Path, compare: Option<&Path>, pixel_size: Option<f64>) -> CliResult<EvaluateOutcome> {
    let px = pixel_size.unwrap_or(ctx.config.metrics.pixel_size_nm);
    if !(px > 0.0) {
        return Err(CliError::Config("pixel size must be positive".into()));
    }
    let dir = ctx.run_dir.join("evaluate");
    let rep = evaluate_dirs(&ctx.config, gt, pred, px)?;
    let other = compare.map(|c| evaluate_dirs(&ctx.config, gt, c, px)).transpose()?;
    report::write_per_image(&rep, &dir.join("metrics.csv"))?;
    report::write_summary(&rep, &dir.join("summary.csv"))?;
    if let Some(o) = &other {
        report::write_per_image(o, &dir.join("metrics_b.csv"))?;
        report::write_summary(o, &dir.join("summary_b.csv"))?;
        report::write_mood(&rep.mood_tests(o), &dir.join("mood.csv"))?;
    }
    ctx.freeze_config(&dir)?;
    Ok(EvaluateOutcome {
        report: rep,
        compare: other,
        dir,
    })
}
