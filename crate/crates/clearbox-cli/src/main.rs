//! clearbox command line: purify, distort, detect-oracle, fuse, eval,
//! run, ablate, overlay.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error,
//! 3 external-command failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clearbox::Error;

#[derive(Parser)]
#[command(name = "clearbox", version, about = "Image purification, detection fusion and COCO-style evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct GlobalArgs {
    /// Experiment config JSON (see README for the schema).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for image-level parallelism (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Output directory (default: ./out, or the config's output_dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// How metric results are printed.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Table,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run a purifier stage sequence over an image or directory.
    Purify {
        /// Input image file or directory of images.
        #[arg(long)]
        input: PathBuf,
        /// JSON file holding a stage array; defaults to the config
        /// variant chosen with --variant.
        #[arg(long)]
        stages: Option<PathBuf>,
        /// Variant id to take the stage list from the config.
        #[arg(long)]
        variant: Option<String>,
        /// Also write each intermediate stage output.
        #[arg(long)]
        trace: bool,
    },
    /// Apply synthetic distortions to an image or directory.
    Distort {
        #[arg(long)]
        input: PathBuf,
        /// noise | blur | downsample (omit to use the config's list).
        #[arg(long, value_enum)]
        kind: Option<DistortKindArg>,
        #[arg(long, value_enum, default_value_t = SeverityArg::Medium)]
        severity: SeverityArg,
        /// Blur direction in degrees.
        #[arg(long, default_value_t = 0.0)]
        angle: f64,
    },
    /// Emit synthetic detections for a dataset.
    DetectOracle {
        /// COCO annotation JSON the oracle perturbs.
        #[arg(long)]
        annotations: PathBuf,
        /// OracleSpec JSON file; defaults to the config's oracle detector.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Variant quality in [0,1].
        #[arg(long, default_value_t = 0.7)]
        quality: f64,
        /// Variant tag (keys the random stream and the output name).
        #[arg(long, default_value = "v0")]
        variant: String,
    },
    /// Fuse detection-results files from several variants into one.
    Fuse {
        /// Two or more COCO detection-results JSON files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// COCO annotation JSON (supplies image sizes).
        #[arg(long)]
        annotations: PathBuf,
        /// Comma-separated per-input weights (defaults to all 1).
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        iou_threshold: Option<f64>,
        #[arg(long, value_enum, default_value_t = FuseMethodArg::Wbf)]
        method: FuseMethodArg,
    },
    /// Score detections against annotations.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Run the full experiment from --config.
    Run,
    /// Ablation studies over the configured pipeline.
    Ablate {
        #[command(subcommand)]
        what: AblateCommand,
    },
    /// Draw ground truth and detections onto the images.
    Overlay {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistortKindArg {
    Noise,
    Blur,
    Downsample,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeverityArg {
    Low,
    Medium,
    High,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FuseMethodArg {
    Wbf,
    Nms,
}

#[derive(Subcommand)]
pub enum AblateCommand {
    /// Cumulative component toggles (tick-table rows).
    Components {
        /// Comma-separated toggles, e.g. "rd,md,re,large,variants,wbf".
        #[arg(long)]
        toggles: Option<String>,
        /// Run the full 2^n on/off grid instead of cumulative rows.
        #[arg(long)]
        grid: bool,
    },
    /// Purifier stage orderings.
    Orderings {
        /// Orderings like "RD,MD,RE"; repeat the flag for several rows.
        #[arg(long = "ordering")]
        orderings: Vec<String>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err.root() {
        Error::InvalidArgument(_) | Error::Config(_) => 1,
        Error::External(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not failures; anything else is usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
