use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "matchgraph", version, about = "Sentence matching over unified pair graphs")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset and write it as normalised JSONL.
    Prep(PrepArgs),
    /// Dump the graph of one pair as JSON.
    BuildGraph(GraphArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// One training run per denoising keep probability.
    SweepAlpha(SweepArgs),
    /// Finite-difference check of the full model gradient.
    Gradcheck(GradcheckArgs),
    /// Node and edge importance of one pair, as DOT and JSON.
    Inspect(InspectArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// JSONL pairs (or CoNLL-U for `prep`).
    #[arg(long)]
    data: PathBuf,
    /// `snli3`, `binary`, or a file with one label per line.
    #[arg(long, default_value = "snli3")]
    labels: String,
}

#[derive(Args, Clone)]
struct StrategyArgs {
    #[arg(long, default_value = "denoise")]
    strategy: String,
    /// Keep probability for denoise.
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    /// Stopword list for co-occurrence, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Ablation {
    Contextual,
    Gates,
    Fusion,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// ModelConfig overrides: a JSON object, or a path to one.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    symmetric: bool,
    #[arg(long, value_enum)]
    ablate: Vec<Ablation>,
}

#[derive(Args, Clone)]
struct TrainingArgs {
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Word vectors, one `word v1 .. vd` line each.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write 0 in the metrics seconds column.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct PrepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Vocabulary cutoff used for the summary.
    #[arg(long, default_value_t = 10)]
    min_count: usize,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Pair to dump; the first pair by default.
    #[arg(long)]
    pair: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampling epoch; evaluation sampling by default.
    #[arg(long)]
    epoch: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainingArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Continue the run stored in the checkpoint.
    #[arg(long)]
    resume: bool,
    /// Metrics CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Per-pair predictions as JSONL.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainingArgs,
    /// Comma-separated; 0, 0.1, .., 1 by default.
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "full")]
    strategy: String,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    pair: Option<String>,
    /// DOT output; the JSON report goes next to it with a .json extension.
    #[arg(long)]
    out: PathBuf,
    /// Interactive edges lighter than this are omitted; half the mean
    /// edge weight by default.
    #[arg(long)]
    threshold: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.trim());
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
