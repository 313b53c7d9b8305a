mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use can_ner::Arch;
use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Character-level Chinese named entity recognition with a convolutional
/// attention network.
#[derive(Debug, Parser)]
#[command(name = "can-ner", version, about)]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a CoNLL file and write a checkpoint.
    Train(TrainArgs),
    /// Tag a CoNLL file (the tag column is optional) with a trained model.
    Tag(TagArgs),
    /// Score predicted tags against gold tags.
    Eval(EvalArgs),
    /// Export attention weights for every sentence as JSON.
    Attn(AttnArgs),
    /// Write a seeded synthetic training corpus.
    Gen(GenArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(GradcheckArgs),
}

/// Model hyper-parameters; each overrides the config file when given.
#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    /// TOML file with model settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<Arch>,
    /// Character embedding width.
    #[arg(long)]
    pub d_ch: Option<usize>,
    /// Convolution and BiGRU width (even).
    #[arg(long)]
    pub d_h: Option<usize>,
    /// Local attention window (odd).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Characters seen fewer times map to UNK.
    #[arg(long)]
    pub min_freq: Option<usize>,
    /// Give out-of-sentence window slots zero attention weight.
    #[arg(long)]
    pub mask_window_pads: bool,
    /// Restrict Viterbi decoding to valid BIOES transitions.
    #[arg(long)]
    pub constrained_decode: bool,
    /// Keep character embeddings fixed during training.
    #[arg(long)]
    pub freeze_embeddings: bool,
    /// Entity types to train on, comma separated (default: those in the training data).
    #[arg(long, value_delimiter = ',')]
    pub types: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct InputFlags {
    /// Fail when a file has no BMES segmentation column instead of treating
    /// every character as a word.
    #[arg(long)]
    pub require_seg: bool,
    /// Repair malformed gold tag sequences instead of rejecting them.
    #[arg(long)]
    pub lenient_tags: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out file for model selection by entity F1.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub model: PathBuf,
    /// Per-epoch metrics log (default: `<model>.metrics.tsv`).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Pretrained character vectors (`count dim` header, then `char v1 .. vd`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Also store the optimizer accumulators in the checkpoint.
    #[arg(long)]
    pub save_optimizer: bool,
    #[command(flatten)]
    pub model_flags: ModelFlags,
    #[command(flatten)]
    pub input: InputFlags,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Restrict decoding to valid BIOES transitions.
    #[arg(long)]
    pub constrained_decode: bool,
    #[command(flatten)]
    pub input_flags: InputFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// File with gold tags.
    #[arg(long)]
    pub gold: PathBuf,
    /// File with predicted tags, same characters and sentence order.
    #[arg(long)]
    pub pred: PathBuf,
    /// `TYPE GROUP` lines for grouped rows.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Print JSON instead of plain text.
    #[arg(long)]
    pub json: bool,
    /// Write the report to a file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Export at most this many sentences.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of sentences.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub output: PathBuf,
    /// Template slots per sentence.
    #[arg(long, default_value_t = 3)]
    pub slots: usize,
    /// Probability that a slot holds an entity.
    #[arg(long, default_value_t = 0.5)]
    pub entity_rate: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, value_parser = parse_arch, default_value = "can")]
    pub arch: Arch,
    #[arg(long, default_value_t = 6)]
    pub d_ch: usize,
    #[arg(long, default_value_t = 8)]
    pub d_h: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Check at most this many entries per parameter tensor.
    #[arg(long)]
    pub max_elements: Option<usize>,
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (_, 0) => log::LevelFilter::Info,
        (_, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().format_timestamp(None).init();

    let result: Result<(), CliError> = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Tag(a) => commands::tag(a),
        Command::Eval(a) => commands::eval(a),
        Command::Attn(a) => commands::attn(a),
        Command::Gen(a) => commands::gen(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("can-ner: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
