//! Command-line front end: argument types and subcommand dispatch.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cutpaste::extraction::Connectivity;
use cutpaste::metrics::{Aggregation, MiouPolicy};

pub mod cmd;

#[derive(Debug, Parser)]
#[command(name = "cutpaste", version, about = "Cut-and-paste augmentation toolkit for multispectral segmentation")]
pub struct Cli {
    /// Global seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-sample work (default: one per core). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut every connected component out of the labelled samples into an instance bank.
    Extract(ExtractArgs),
    /// Paste bank instances onto every sample and write the augmented dataset.
    Augment(AugmentArgs),
    /// Score predicted masks against ground truth (per-class IoU and mIoU).
    Eval(EvalArgs),
    /// AOI-disjoint train/validation split with every class on both sides.
    Split(SplitArgs),
    /// Class pixel histogram of a dataset, plus optional bank statistics.
    Stats(StatsArgs),
    /// Synthetic baseline vs cut-and-paste experiment.
    Demo(DemoArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    pub fn is_on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub classmap: PathBuf,
    /// Bank directory to create or overwrite.
    #[arg(long)]
    pub out: PathBuf,
    /// Pixel adjacency: 4 or 8.
    #[arg(long, default_value_t = Connectivity::Four)]
    pub connectivity: Connectivity,
    /// Components smaller than this are dropped.
    #[arg(long, default_value_t = 1)]
    pub min_pixels: usize,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Instance bank; required when --n-paste is above 0.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Instances pasted per sample.
    #[arg(long, default_value_t = 100)]
    pub n_paste: usize,
    /// Random flips and quarter turns on each instance before pasting.
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    pub pre_paste_augment: Toggle,
    /// Random flips and quarter turns on the whole sample after pasting.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub post_augment: Toggle,
    /// Epoch index mixed into each sample's random stream.
    #[arg(long, default_value_t = 0)]
    pub epoch: u64,
    /// Per-axis flip probability for pre-paste transforms.
    #[arg(long, default_value_t = 0.5)]
    pub flip_probability: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding one `<sample_id>.mskl` prediction per manifest row.
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub classmap: PathBuf,
    #[arg(long, default_value_t = Aggregation::Global)]
    pub aggregation: Aggregation,
    /// How classes with an empty union enter the mean.
    #[arg(long, default_value_t = MiouPolicy::ExcludeUndefined)]
    pub policy: MiouPolicy,
    /// Report file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub classmap: PathBuf,
    /// Requested share of samples in the validation split.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_attempts: usize,
    /// Split JSON file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub classmap: PathBuf,
    /// Also report per-class instance statistics of this bank.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Stats JSON file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Directory for report.json and report.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Cut-and-paste N values; a baseline (N=0) row is always added.
    #[arg(long, value_delimiter = ',', default_values_t = [50])]
    pub n_paste: Vec<usize>,
    /// Pre-paste augmentation settings crossed with every N.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Toggle::Off])]
    pub pre_paste_augment: Vec<Toggle>,
    /// Training seeds per variant: seed, seed+1, ...
    #[arg(long, default_value_t = 3)]
    pub runs: u64,
    /// Seed of the synthetic dataset (independent of --seed).
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,
    #[arg(long, default_value_t = 4)]
    pub bands: usize,
    /// Class count: background, common classes, and one rare class.
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub train_images: usize,
    #[arg(long, default_value_t = 10)]
    pub test_images: usize,
    /// Share of training pixels in the rare class.
    #[arg(long, default_value_t = 0.01)]
    pub rare_fraction: f64,
    /// Gaussian noise added to every band value.
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    /// Pixels per SGD mini-batch.
    #[arg(long, default_value_t = 512)]
    pub batch_pixels: usize,
    /// SGD steps per training sample per epoch.
    #[arg(long, default_value_t = 4)]
    pub batches_per_sample: usize,
    /// Standard flips/rotations on every training sample, baseline included.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub post_augment: Toggle,
    /// Also write the generated dataset under <out>/data.
    #[arg(long)]
    pub write_data: bool,
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // a second init (tests) is harmless
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Runs one parsed command line on a pool sized by `--threads`.
pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        anyhow::ensure!(t > 0, "--threads must be positive");
        builder = builder.num_threads(t);
    }
    let pool = builder.build().context("building thread pool")?;
    let seed = cli.seed;
    pool.install(|| match &cli.command {
        Command::Extract(a) => cmd::extract::run(a),
        Command::Augment(a) => cmd::augment::run(a, seed),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Split(a) => cmd::split::run(a, seed),
        Command::Stats(a) => cmd::stats::run(a),
        Command::Demo(a) => cmd::demo::run(a, seed),
    })
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub(crate) fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => stdout(text),
    }
}

/// Prints to stdout; a closed pipe (`| head`) ends output quietly.
pub(crate) fn stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.context("writing to stdout"),
    }
}
