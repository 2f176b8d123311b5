mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use farfield::enhance::LossKind;
use farfield::geometry::Topology;
use farfield::mixer::Target;
use serde::de::DeserializeOwned;

use config::CONFIG_ENV;

/// Far-field multi-channel speech enhancement toolkit.
#[derive(Debug, Parser)]
#[command(name = "farfield", version, about)]
pub struct Cli {
    /// Pipeline config (TOML). Flags override values from the file.
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-clip parallelism (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate room impulse responses for random rooms.
    GenRirs(GenRirsArgs),
    /// Mix reverberant speech and noise into a dataset.
    #[command(alias = "synthesize")]
    Synth(SynthArgs),
    /// Train the mask estimator.
    Train(TrainArgs),
    /// Enhance one recording or every clip of a dataset manifest.
    Enhance(EnhanceArgs),
    /// Score enhanced clips against their references.
    Eval(EvalArgs),
    /// Measure the real-time factor of the enhancement path.
    Rtf(RtfArgs),
    /// Aggregate listening-test ratings.
    Mos(MosArgs),
    /// Print the resolved configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
pub struct GenRirsArgs {
    /// circular16, linear-uniform8, linear-nonuniform8 or dual-linear16.
    #[arg(long)]
    pub topology: Option<Topology>,
    /// Number of RIR files; consecutive files share a room.
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Highest reflection order.
    #[arg(long)]
    pub max_order: Option<u32>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Mixture specs (JSON Lines). Without it, specs are drawn from
    /// --speech/--noise.
    #[arg(long, conflicts_with_all = ["speech", "noise", "count"])]
    pub specs: Option<PathBuf>,
    /// RIR manifest written by gen-rirs.
    #[arg(long)]
    pub rirs: PathBuf,
    /// Directory of mono speech WAVs.
    #[arg(long, requires_all = ["noise", "count"])]
    pub speech: Option<PathBuf>,
    /// Directory of mono noise WAVs.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Number of clips to draw.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub snr_min: Option<f64>,
    #[arg(long)]
    pub snr_max: Option<f64>,
    #[arg(long)]
    pub clip_seconds: Option<f64>,
    /// reverberant or dry.
    #[arg(long, value_parser = parse_enum::<Target>)]
    pub target: Option<Target>,
    /// Keep only speech files whose estimated SNR exceeds this (dB).
    #[arg(long)]
    pub speech_gate_db: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset manifest.
    #[arg(long)]
    pub train: PathBuf,
    /// Development dataset manifest.
    #[arg(long)]
    pub dev: PathBuf,
    /// Output directory for the checkpoint and the training log.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// neg-si-snr or mask-mse.
    #[arg(long, value_parser = parse_enum::<LossKind>)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from an existing checkpoint.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Multi-channel input WAV.
    #[arg(
        long = "in",
        conflicts_with = "manifest",
        required_unless_present = "manifest"
    )]
    pub input: Option<PathBuf>,
    /// Dataset manifest; every clip is enhanced into --out/<id>.wav.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output WAV, or directory with --manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Frame-by-frame causal processing.
    #[arg(long)]
    pub streaming: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest with mixtures and references.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding <clip id>.wav enhanced files.
    #[arg(long)]
    pub enhanced: PathBuf,
    /// Report directory (default: the enhanced directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// External PESQ executable, called as `EXE ref.wav deg.wav`.
    #[arg(long)]
    pub pesq: Option<PathBuf>,
    /// Skip the CSV export.
    #[arg(long)]
    pub no_csv: bool,
}

#[derive(Debug, Args)]
pub struct RtfArgs {
    /// Model checkpoint.
    #[arg(
        long,
        required_unless_present = "random_init",
        conflicts_with = "random_init"
    )]
    pub model: Option<PathBuf>,
    /// Benchmark a randomly initialized model of the configured size.
    #[arg(long)]
    pub random_init: bool,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Input WAV; a synthetic clip is used when absent.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Length of the synthetic clip.
    #[arg(long, default_value_t = 6.0)]
    pub seconds: f64,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Whole-clip processing instead of the streaming path.
    #[arg(long)]
    pub offline: bool,
    /// Report JSON path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MosArgs {
    /// Ratings CSV with header clip_id,rater_id,mos,smos,nmos.
    #[arg(long)]
    pub ratings: PathBuf,
    /// Ratings of the unprocessed clips, for the delta scores.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Summary JSON path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses a kebab-case enum through its serde names.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Context chain down to the first library error, whose message already
/// includes its own cause.
fn describe(e: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for cause in e.chain() {
        parts.push(cause.to_string());
        if cause.is::<farfield::Error>() {
            break;
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
