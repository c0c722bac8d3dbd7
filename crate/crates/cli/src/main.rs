//! `insulnet` command-line driver.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or configuration, 2 for
//! failures while running.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Every problem found in the arguments and configuration.
    Validation(Vec<String>),
    Runtime(String),
}

impl From<insulnet::Error> for CliError {
    fn from(e: insulnet::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "insulnet", version, about = "Two-stage insulator defect detection")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

/// Settings shared by the training commands; flags override the config file.
#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest (overrides `data.manifest`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory (overrides `run_dir`).
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validate and print the effective configuration without training.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Segmentation,
    Classification,
    EndToEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Render a synthetic dataset with masks and a manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Training images per class.
        #[arg(long, default_value_t = 1)]
        per_class: usize,
        /// Validation images per class.
        #[arg(long, default_value_t = 0)]
        val_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image side length in pixels.
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
    /// Train the segmentation network.
    TrainSeg(TrainArgs),
    /// Train the classification network.
    TrainCls {
        #[command(flatten)]
        train: TrainArgs,
        /// Regime flags: comma-separated subset of `pre,reset,alt`, or `none`.
        #[arg(long)]
        regime: Option<String>,
        /// Segmentation checkpoint producing the training masks.
        #[arg(long)]
        segmenter: Option<PathBuf>,
        /// Ground-truth-trained classifier for the pre-trained regime.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Run every training regime and write a summary table.
    Ablate {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        segmenter: Option<PathBuf>,
    },
    /// Score checkpoints on one split of a dataset.
    Eval {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        /// Directory for the metric CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean IoU of a segmenter over a grid of thresholds.
    Sweep {
        #[arg(long)]
        segmenter: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        /// `lo:hi:step`.
        #[arg(long, default_value = "0.1:0.9:0.1")]
        grid: String,
        /// CSV output file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment and classify images.
    Predict {
        #[command(flatten)]
        models: ModelArgs,
        /// Directory for per-image JSON, mask and composed image.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
}

/// Checkpoints and threshold; flags override the `[pipeline]` section.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub segmenter: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::GenData { out, per_class, val_per_class, seed, size } => {
            commands::gen_data(&out, per_class, val_per_class, seed, size)
        }
        Cmd::TrainSeg(args) => commands::train_seg(&args),
        Cmd::TrainCls { train, regime, segmenter, pretrained } => {
            commands::train_cls(&train, regime.as_deref(), segmenter, pretrained)
        }
        Cmd::Ablate { train, segmenter } => commands::ablate(&train, segmenter),
        Cmd::Eval { mode, models, manifest, split, out } => {
            commands::eval(mode, &models, &manifest, split, out.as_deref())
        }
        Cmd::Sweep { segmenter, manifest, split, grid, out } => {
            commands::sweep(&segmenter, &manifest, split, &grid, out.as_deref())
        }
        Cmd::Predict { models, out, images } => commands::predict(&models, out.as_deref(), &images),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(problems)) => {
            eprintln!("invalid configuration:");
            for p in problems {
                eprintln!("  {p}");
            }
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
