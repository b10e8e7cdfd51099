//! `crop`: command-line harness for region-guided visual token pruning.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "crop", version, about = "Region-guided visual token pruning harness")]
pub struct Cli {
    /// Run seed: synthetic tokens, query-bank init, random localizer and,
    /// unless the config sets one, model weights.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML file with `[model]`, `[plc]`, `[synth]` and `[gen]` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output files; without it the primary output goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the token indices a region keeps.
    Map(MapArgs),
    /// Produce a region per sample from a localizer.
    Locate(LocateArgs),
    /// Fit regions to a pruning-rate budget.
    Fit(FitArgs),
    /// Run pre-LLM compression over a dataset.
    Plc(PlcArgs),
    /// Run inner-LLM pruning and report proxy quality.
    Ilp(IlpArgs),
    /// Sweep the pruning layer over rates; writes CSV.
    #[command(name = "sweep-k")]
    SweepK(SweepArgs),
    /// Time baseline and pruned forwards.
    Bench(BenchArgs),
    /// Relative accuracy of a run against a baseline run.
    Relacc(RelaccArgs),
    /// Area recall of predicted regions against ground truth.
    Recall(RecallArgs),
    /// Draw regions and kept tokens as SVG (and optionally PPM).
    Render(RenderArgs),
    /// Write a synthetic dataset.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LocalizerKind {
    /// The dataset's ground-truth regions.
    Gt,
    /// Regions from `--predictions`.
    File,
    Center,
    Random,
}

#[derive(Debug, Args)]
pub struct RegionSource {
    #[arg(long, value_enum, default_value = "gt")]
    pub localizer: LocalizerKind,
    /// JSON Lines `{"id", "region"}` file; also sizes center/random regions.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Seed for the random localizer; defaults to `--seed`.
    #[arg(long)]
    pub localizer_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub region: String,
    #[arg(long)]
    pub side: usize,
    #[arg(long, default_value_t = 1)]
    pub views: usize,
}

#[derive(Debug, Args)]
pub struct LocateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: RegionSource,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: RegionSource,
    /// Target fraction of visual tokens removed, in [0, 1).
    #[arg(long)]
    pub rate: f64,
    /// Fit each sample to the target alone instead of tracking the dataset average.
    #[arg(long)]
    pub per_sample: bool,
}

#[derive(Debug, Args)]
pub struct PlcArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: RegionSource,
    /// Load query banks from this checkpoint instead of seeding them.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Write the query banks in use to this checkpoint.
    #[arg(long)]
    pub save_checkpoint: Option<PathBuf>,
    /// Drop the anchor fusion branch.
    #[arg(long)]
    pub ablate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Keep,
    Reindex,
}

#[derive(Debug, Args)]
pub struct IlpArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: RegionSource,
    /// Pruning layer K: prune after block K.
    #[arg(long, default_value_t = 2)]
    pub layer: usize,
    /// Fit regions to this pruning rate first.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_enum, default_value = "keep")]
    pub policy: PolicyArg,
    /// Keep the same number of tokens ranked by query attention instead of the region.
    #[arg(long)]
    pub topr: bool,
    /// Earlier run report to compute relative accuracy against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Also write per-sample trace records (`trace.jsonl`).
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrunePointArg {
    /// K full blocks run before pruning.
    After,
    /// Pruning happens at the input of block K.
    Input,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: RegionSource,
    #[arg(long, value_delimiter = ',', default_value = "0.667,0.778,0.889")]
    pub rates: Vec<f64>,
    /// Layer range `a..b` (inclusive) or a comma list; defaults to every layer.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long, value_enum, default_value = "after")]
    pub prune_point: PrunePointArg,
    #[arg(long, value_enum, default_value = "keep")]
    pub policy: PolicyArg,
    /// Leave the wall-time column empty so output is byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: RegionSource,
    #[arg(long, value_delimiter = ',', default_value = "0,0.667,0.778,0.889")]
    pub rates: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 2)]
    pub layer: usize,
    /// Number of dataset samples to time (from the start).
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    /// Localizer latency in seconds for the pipeline model.
    #[arg(long, default_value_t = 0.0)]
    pub localizer_latency: f64,
    /// Requests in the pipeline model.
    #[arg(long, default_value_t = 100)]
    pub items: usize,
}

#[derive(Debug, Args)]
pub struct RelaccArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub baseline: PathBuf,
    /// JSON or TOML table of per-metric weights.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecallArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: RegionSource,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Grid side; taken from the sample when `--dataset` is used.
    #[arg(long)]
    pub side: Option<usize>,
    /// Region to draw; repeatable.
    #[arg(long)]
    pub region: Vec<String>,
    /// Label for the matching `--region`.
    #[arg(long)]
    pub label: Vec<String>,
    /// Draw the ground truth (and `--predictions` entry) of this sample.
    #[arg(long, requires = "dataset")]
    pub id: Option<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Also write a PPM with this many pixels per token.
    #[arg(long)]
    pub ppm: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub views: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
