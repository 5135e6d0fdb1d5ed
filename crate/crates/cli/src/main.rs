//! maskbev-kit: BEV footprint mask labels, pillar encoding, augmentation
//! and mask detection metrics for KITTI-style LiDAR datasets.
//!
//! Exit codes: 0 success, 1 partial failure (some scans failed, see the run
//! manifest), 2 invalid input or configuration. The MASKBEV_KIT_LOG
//! environment variable (error|warn|info|debug) controls verbosity.

mod commands;
mod config;
mod dataset;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{analyze, augment, encode, eval, gen_masks};
use config::{Dataset, ToolkitConfig};

#[derive(Parser)]
#[command(name = "maskbev-kit", version, about)]
struct Cli {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = machine default).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Seed override for seeded commands.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output path: directory for gen-masks/augment, file for encode,
    /// report path for eval, file prefix for analyze-completion.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate BEV mask label files from a dataset directory.
    GenMasks {
        #[arg(long, value_enum)]
        dataset: Dataset,
        /// Dataset root (KITTI: contains label_2/, calib/; SemanticKITTI:
        /// contains sequences/).
        #[arg(long)]
        root: Option<PathBuf>,
        /// Sequence name for semantickitti (e.g. "08").
        #[arg(long)]
        sequence: Option<String>,
        /// Also render mask-overlay PNGs into this directory.
        #[arg(long)]
        overlay_dir: Option<PathBuf>,
    },
    /// Encode one scan into a BEVT tensor file.
    Encode {
        #[arg(long)]
        scan: PathBuf,
        /// Grid/crop defaults to use when the config has no overrides.
        #[arg(long, value_enum, default_value = "kitti")]
        dataset: Dataset,
    },
    /// Evaluate prediction mask files against ground-truth mask files.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        /// KITTI label directory enabling the per-difficulty breakdown.
        #[arg(long, requires = "calib_dir")]
        labels_dir: Option<PathBuf>,
        #[arg(long, requires = "labels_dir")]
        calib_dir: Option<PathBuf>,
        /// IoU threshold of the per-difficulty breakdown.
        #[arg(long, default_value_t = 0.7)]
        difficulty_threshold: f64,
    },
    /// Footprint-completion statistics over a sequence.
    AnalyzeCompletion {
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        sequence: String,
        /// Prediction directory for the prediction/complete area histogram.
        #[arg(long)]
        pred_dir: Option<PathBuf>,
    },
    /// Apply the configured augmentation pipeline to one scan + labels.
    Augment {
        #[arg(long)]
        scan: PathBuf,
        /// Label file: .label (per-point), .txt (KITTI boxes, needs
        /// --calib) or .json (mask labels).
        #[arg(long)]
        labels: PathBuf,
        /// KITTI calibration file for box labels.
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Scan to harvest paste instances from.
        #[arg(long)]
        bank_scan: Option<PathBuf>,
        /// Labels of the bank scan (.label or .txt).
        #[arg(long)]
        bank_labels: Option<PathBuf>,
        #[arg(long)]
        bank_calib: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("MASKBEV_KIT_LOG", "warn"),
    )
    .init();
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<u8> {
    let cli = Cli::parse();
    let config = ToolkitConfig::load(cli.config.as_deref())?;
    let workers = cli.workers.unwrap_or(config.workers);

    let out_or = |fallback: Option<&String>, what: &str| -> anyhow::Result<PathBuf> {
        cli.out
            .clone()
            .or_else(|| fallback.map(PathBuf::from))
            .ok_or_else(|| anyhow::anyhow!("--out is required ({what})"))
    };
    let root_or = |arg: &Option<PathBuf>| -> anyhow::Result<PathBuf> {
        arg.clone()
            .or_else(|| config.io.dataset_root.as_ref().map(PathBuf::from))
            .ok_or_else(|| anyhow::anyhow!("--root is required (or io.dataset_root in the config)"))
    };

    match &cli.command {
        Command::GenMasks {
            dataset,
            root,
            sequence,
            overlay_dir,
        } => gen_masks::run(
            &gen_masks::GenMasksArgs {
                dataset: *dataset,
                root: root_or(root)?,
                sequence: sequence.clone(),
                out_dir: out_or(config.io.out_dir.as_ref(), "output directory")?,
                overlay_dir: overlay_dir.clone(),
            },
            &config,
            workers,
        ),
        Command::Encode { scan, dataset } => encode::run(
            &encode::EncodeArgs {
                scan: scan.clone(),
                out: out_or(None, "output tensor path")?,
                dataset: *dataset,
            },
            &config,
        ),
        Command::Eval {
            pred_dir,
            gt_dir,
            labels_dir,
            calib_dir,
            difficulty_threshold,
        } => eval::run(
            &eval::EvalArgs {
                pred_dir: pred_dir.clone(),
                gt_dir: gt_dir.clone(),
                report: out_or(None, "report path")?,
                labels_dir: labels_dir.clone(),
                calib_dir: calib_dir.clone(),
                difficulty_threshold: *difficulty_threshold,
            },
            &config,
        ),
        Command::AnalyzeCompletion {
            root,
            sequence,
            pred_dir,
        } => analyze::run(
            &analyze::AnalyzeArgs {
                root: root_or(root)?,
                sequence: sequence.clone(),
                out_prefix: out_or(config.io.out_dir.as_ref(), "output prefix")?,
                pred_dir: pred_dir.clone(),
            },
            &config,
            workers,
        ),
        Command::Augment {
            scan,
            labels,
            calib,
            bank_scan,
            bank_labels,
            bank_calib,
        } => augment::run(
            &augment::AugmentArgs {
                scan: scan.clone(),
                labels: labels.clone(),
                out_dir: out_or(config.io.out_dir.as_ref(), "output directory")?,
                calib: calib.clone(),
                bank_scan: bank_scan.clone(),
                bank_labels: bank_labels.clone(),
                bank_calib: bank_calib.clone(),
                seed: cli.seed,
            },
            &config,
        ),
    }
}
