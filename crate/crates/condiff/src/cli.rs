//! Argument parsing and dispatch. Dotted `--section.key value` flags are
//! configuration overrides and may appear anywhere on the command line.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, Context};
use crate::config::{self, Override};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "condiff", version, about = "Conditional diffusion restoration of low-dose images")]
pub struct Cli {
    /// TOML configuration file; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory; defaults to `<paths.runs>/<config hash>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic paired dataset.
    Synth,
    /// Train the denoiser and keep the checkpoint with the lowest validation MAE.
    Train(TrainArgs),
    /// Reconstruct images with a sample ensemble and uncertainty maps.
    Denoise(DenoiseArgs),
    /// Compute the metric suite of predictions against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (default: `<run>/dataset`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Start from the weights of this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Input images or directories of images.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Checkpoint (default: `<run>/train/checkpoint.bin`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Ensemble size (default: `ensemble.samples`).
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// Comma-separated sample seeds; must list `--ensemble` entries.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction directory with the same file names.
    #[arg(long)]
    pub pred: PathBuf,
    /// Second prediction directory; adds Mood's median test per metric.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Pixel size in nm (default: `metrics.pixel_size_nm`).
    #[arg(long)]
    pub pixel_size: Option<f64>,
}

fn execute(cli: Cli, overrides: &[Override]) -> CliResult<()> {
    let cfg = config::load(cli.config.as_deref(), overrides)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let ctx = Context::new(cfg, cli.out.as_deref());
    match cli.command {
        Command::Synth => {
            let dir = commands::synth(&ctx)?;
            println!("dataset written to {}", dir.display());
        }
        Command::Train(a) => {
            let start = Instant::now();
            let epochs = ctx.config.train.epochs;
            let out = commands::train(&ctx, a.data.as_deref(), a.resume.as_deref(), |r| {
                let val = r.val_mae.map(|v| format!(" val_mae {v:.4}")).unwrap_or_default();
                eprintln!(
                    "epoch {}/{epochs} loss {:.5}{val} ({:.1} s)",
                    r.epoch,
                    r.train_loss,
                    start.elapsed().as_secs_f64()
                );
            })?;
            println!(
                "best epoch {} (val_mae {:.4}); checkpoint {}",
                out.history.best_epoch,
                out.history.best_val_mae().unwrap_or(f64::NAN),
                out.checkpoint.display()
            );
        }
        Command::Denoise(a) => {
            let seeds = commands::resolve_seeds(&ctx.config, a.ensemble, a.seeds)?;
            let dirs = commands::denoise(&ctx, &a.inputs, a.checkpoint.as_deref(), &seeds)?;
            for d in dirs {
                println!("{}", d.display());
            }
        }
        Command::Evaluate(a) => {
            let out = commands::evaluate(&ctx, &a.gt, &a.pred, a.compare.as_deref(), a.pixel_size)?;
            for k in condiff_core::metrics::MetricKind::ALL {
                match out.report.summary.median(k) {
                    Some(v) => println!("{:<16} {v:.6}", k.name()),
                    None => println!("{:<16} undefined", k.name()),
                }
            }
            println!("reports written to {}", out.dir.display());
        }
    }
    Ok(())
}

/// Runs the command line `args` (program name first) and returns the exit
/// code: 0 success, 2 config, 3 missing data, 4 checkpoint, 5 shape,
/// 6 pairing, 1 anything else.
pub fn run(args: Vec<String>) -> i32 {
    let (rest, overrides) = match config::extract_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, &overrides) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
