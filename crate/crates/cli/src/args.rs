use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Adversarial-audio toolkit: synthetic corpus, toy recognizer, attacks,
/// input-transformation defenses and temporal-dependency detection.
#[derive(Debug, Parser)]
#[command(name = "tempdep", version)]
pub struct Cli {
    /// JSON file with default values for any long flag (keys are flag names).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-clip fan-out; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic tone-speech corpus (WAVs + manifests).
    Synth(SynthArgs),
    /// Train the toy recognizer on a manifest.
    Train(TrainArgs),
    /// Attack the benign clips of a manifest.
    Attack(AttackArgs),
    /// Apply an input transformation to every clip of a manifest.
    Transform(TransformArgs),
    /// Temporal-dependency detection with AUC per metric.
    Detect(DetectArgs),
    /// Defense evaluation: error rates with and without a transformation.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub utterances: Option<usize>,
    /// Leading utterances written to train.jsonl; the rest go to heldout.jsonl.
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub min_words: Option<usize>,
    #[arg(long)]
    pub max_words: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Manifest for the held-out CER in the training report.
    #[arg(long)]
    pub held_out: Option<PathBuf>,
    /// Training report path (defaults to `<out>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct BackendArgs {
    /// toy | command | http | scripted
    #[arg(long)]
    pub backend: Option<String>,
    /// Toy model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Command template; `{wav}` is replaced by the WAV path.
    #[arg(long)]
    pub command: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// JSON object mapping clip id to transcript.
    #[arg(long)]
    pub scripted: Option<PathBuf>,
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct TransformFlags {
    /// identity | quantize | smooth | downsample | autoencoder
    #[arg(long)]
    pub transform: Option<String>,
    #[arg(long)]
    pub q: Option<u32>,
    /// Smoothing window size.
    #[arg(long = "K")]
    pub window: Option<usize>,
    /// average | median
    #[arg(long)]
    pub smooth_kind: Option<String>,
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Fitted autoencoder to load instead of fitting on the manifest.
    #[arg(long)]
    pub ae_model: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct KFlags {
    /// Fixed fraction(s); repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<f64>,
    /// Uniform random fraction in [a, b).
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub k_rand: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Same target for every clip; random per-clip targets otherwise.
    #[arg(long)]
    pub target: Option<String>,
    /// Words per random target.
    #[arg(long)]
    pub target_words: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub c_schedule: Vec<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    /// none | quantize | downsample | smooth
    #[arg(long)]
    pub adaptive: Option<String>,
    /// plain | segment | concat-split | concat-silence | combination
    #[arg(long)]
    pub variant: Option<String>,
    /// Attack only the first N benign clips (by id).
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub k: KFlags,
    #[command(flatten)]
    pub transform: TransformFlags,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub transform: TransformFlags,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// One manifest, or several for the attack-set × k matrix.
    #[arg(long)]
    pub manifest: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// wer | cer | lcp (used for the matrix and ROC files).
    #[arg(long)]
    pub metric: Option<String>,
    /// word | char; forces one truncation for every metric.
    #[arg(long)]
    pub granularity: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub k: KFlags,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub transform: TransformFlags,
    #[command(flatten)]
    pub backend: BackendArgs,
}
