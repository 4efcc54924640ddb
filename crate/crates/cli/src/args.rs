use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "xaiseg",
    version,
    about = "Crack segmentation from image-level labels via attribution maps"
)]
pub struct Cli {
    /// Worker threads for per-image work; 0 uses every core. `--jobs 1` is the
    /// reproducible verification mode.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset manifest; overrides `data.manifest`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic crack corpus and its manifest.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the patch classifier.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an explainer network against a frozen classifier.
    TrainExplainer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Frozen classifier; overrides `model.classifier`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attribution maps for every image the classifier calls positive.
    Attribute {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Method tag, e.g. `lrp` or `deeplift_shap+augsmooth`; overrides `method`.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        explainer: Option<PathBuf>,
        /// A directory of graymaps or a manifest.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold and clean attribution maps into masks.
    Postprocess {
        #[command(flatten)]
        common: Common,
        /// Directory of `.attr` maps.
        #[arg(long)]
        attrs: PathBuf,
        /// Ground-truth masks (directory or manifest) for per-step metrics.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Crack count, area and width for each mask.
    Severity {
        #[command(flatten)]
        common: Common,
        /// Directory of mask graymaps.
        #[arg(long)]
        masks: PathBuf,
        /// Millimetres per pixel; overrides `severity.mm_per_px`.
        #[arg(long)]
        calibration: Option<f64>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated crack growth and how well its trend is recovered.
    Growth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        explainer: Option<PathBuf>,
        /// Number of trajectories; overrides `growth.n`.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every method under both thresholds, with and without morphology.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        explainer: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}
