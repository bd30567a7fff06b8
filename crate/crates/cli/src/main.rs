use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod inputs;

/// Build, evaluate and ablate conversational QA datasets generated from text corpora.
#[derive(Parser, Debug)]
#[command(name = "convqa", version, about, long_about = None)]
struct Cli {
    /// Disable data parallelism.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a generator on dialog corpora with the multi-task objective.
    Train(TrainArgs),
    /// Turn passages into dialogs with a trained generator.
    Generate(GenerateArgs),
    /// Reference-free metrics, question-type profile and judge prompts.
    Evaluate(EvaluateArgs),
    /// Dialog counts and mean turns.
    Stats(StatsArgs),
    /// Build query-passage pairs and score a retriever.
    RetrievalEval(RetrievalArgs),
    /// Run the task-by-reranking ablation grid.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Trainable hashed bag-of-words model.
    Bow,
    /// Deterministic template generator; training is a no-op.
    Stub,
}

/// Where passages come from.
#[derive(Args, Debug, Clone)]
pub struct PassageSource {
    /// Corpus registry (TOML).
    #[arg(long, requires = "corpus")]
    registry: Option<PathBuf>,
    /// Passage corpus name in the registry.
    #[arg(long, requires = "registry")]
    corpus: Option<String>,
    /// JSON lines of `{id, title, text}`.
    #[arg(long, conflicts_with_all = ["registry", "corpus"])]
    passages: Option<PathBuf>,
    /// Use the built-in 20-passage fixture.
    #[arg(long, conflicts_with_all = ["registry", "corpus", "passages"])]
    fixture_passages: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    lambda_qam: Option<f64>,
    #[arg(long)]
    lambda_tdg: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory: checkpoint, metrics log, manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long, conflicts_with = "backend", required_unless_present = "backend")]
    checkpoint: Option<PathBuf>,
    /// Use an untrained backend instead of a checkpoint.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[command(flatten)]
    source: PassageSource,
    #[arg(long, default_value_t = 5)]
    beam_size: usize,
    /// Re-rank beam candidates with the scorer (default).
    #[arg(long, overrides_with = "no_rerank")]
    rerank: bool,
    /// Keep the top model candidate.
    #[arg(long)]
    no_rerank: bool,
    #[arg(long, default_value = "lexical-overlap")]
    scorer: String,
    /// Maximum keywords in the keyword prompt.
    #[arg(long, default_value_t = 3)]
    keywords: usize,
    /// Maximum question length in words.
    #[arg(long, default_value_t = 64)]
    max_question_length: usize,
    /// Store every candidate set in a sidecar file.
    #[arg(long)]
    retain_candidates: bool,
    /// Recorded in the manifest.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset name; defaults to the output directory name.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Metric plug-in; repeatable.
    #[arg(long = "metric", default_value = "lexical-overlap")]
    metrics: Vec<String>,
    /// Also profile question types.
    #[arg(long)]
    question_types: bool,
    #[arg(long, default_value = "rule-based")]
    classifier: String,
    /// Merged question-type ontology (TOML).
    #[arg(long)]
    ontology: Option<PathBuf>,
    /// Second dataset over the same passages; writes pairwise judge prompts.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    judge_limit: usize,
    /// Send the judge prompts to the endpoint in CONVQA_JUDGE_ENDPOINT.
    #[arg(long, requires = "compare")]
    judge_live: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Dataset file; repeatable.
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    #[arg(long, requires = "corpora")]
    registry: Option<PathBuf>,
    /// Dialog corpus name in the registry; repeatable.
    #[arg(long = "corpus", requires = "registry")]
    corpora: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RetrievalArgs {
    /// Generated dataset providing the queries.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    source: PassageSource,
    /// At most this many pairs.
    #[arg(long)]
    cap: Option<usize>,
    /// BEIR-layout benchmark directory; defaults to the pairs themselves.
    #[arg(long)]
    benchmark: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value = "tfidf", conflicts_with = "rankings")]
    retriever: String,
    /// Precomputed rankings (JSON lines of `{query_id, ranked}`).
    #[arg(long)]
    rankings: Option<PathBuf>,
    /// Cutoff; repeatable.
    #[arg(long = "k", default_value = "10")]
    ks: Vec<usize>,
    /// Retriever seed; repeatable.
    #[arg(long = "seed", default_value = "0")]
    seeds: Vec<u64>,
    /// Retriever training config (TOML).
    #[arg(long)]
    retriever_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Grid config (TOML); the built-in fixtures are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Metric plug-in; repeatable. Overrides the config.
    #[arg(long = "metric")]
    metrics: Vec<String>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    out: PathBuf,
}

/// A bad invocation detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential {
        convqa_core::Execution::Sequential
    } else {
        convqa_core::Execution::Parallel
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a, exec),
        Command::Generate(a) => commands::generate(a, exec),
        Command::Evaluate(a) => commands::evaluate(a, exec),
        Command::Stats(a) => commands::stats(a, exec),
        Command::RetrievalEval(a) => commands::retrieval_eval(a, exec),
        Command::Ablate(a) => commands::ablate(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
