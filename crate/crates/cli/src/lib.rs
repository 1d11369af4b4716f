//! Command-line driver: extraction, MCQ evaluation, overlap, reconstruction
//! and embedding studies over a corpus and a Knowledge Unit store.
//!
//! Every subcommand writes its outputs under `--out` with fixed file names,
//! plus a `run.json` holding the full invocation and resolved settings.
//! `alexandria replay <run.json>` re-runs it.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub mod commands;
pub mod config;

pub use config::{
    build_gateway, ConfigFile, ProviderArgs, ProviderSection, MOCK_EMBEDDER, MOCK_PROVIDER,
};

pub const EXIT_OK: i32 = 0;
/// Any fatal error, including configuration and usage errors.
pub const EXIT_FAILURE: i32 = 1;
/// `validate --strict` found problems but nothing else went wrong.
pub const EXIT_FINDINGS: i32 = 2;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "alexandria",
    version,
    about = "Knowledge Unit extraction and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Extract Knowledge Units from a corpus into a store.
    Extract(ExtractArgs),
    /// Generate MCQs and evaluate models under each context condition.
    EvalMcq(EvalArgs),
    /// Score n-gram overlap between sources and their Knowledge Units.
    Overlap(OverlapArgs),
    /// Regenerate prose from Knowledge Units alone.
    Reconstruct(ReconstructArgs),
    /// Cosine similarity of abstracts against control texts.
    EmbedBaseline(EmbedArgs),
    /// Render tables from the CSV outputs of earlier runs.
    Report(ReportArgs),
    /// Check stored units against their source chunks.
    Validate(ValidateArgs),
    /// Re-run the invocation recorded in a run.json.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Extract(_) => "extract",
            Command::EvalMcq(_) => "eval-mcq",
            Command::Overlap(_) => "overlap",
            Command::Reconstruct(_) => "reconstruct",
            Command::EmbedBaseline(_) => "embed-baseline",
            Command::Report(_) => "report",
            Command::Validate(_) => "validate",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChunkPolicyArg {
    /// Token ranges for abstracts, fixed-size word segments for full papers.
    Auto,
    Tokens,
    Words,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value = "mock")]
    pub model: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Previous units included in each extraction prompt.
    #[arg(long, default_value_t = 10)]
    pub context_window: usize,
    #[arg(long, value_enum, default_value_t = ChunkPolicyArg::Auto)]
    pub chunk_policy: ChunkPolicyArg,
    #[arg(long, default_value_t = 200)]
    pub chunk_min_tokens: usize,
    #[arg(long, default_value_t = 500)]
    pub chunk_max_tokens: usize,
    #[arg(long, default_value_t = 200)]
    pub segment_words: usize,
    /// Documents with at most this many words count as abstracts.
    #[arg(long, default_value_t = 400)]
    pub abstract_max_words: usize,
    #[arg(long, default_value_t = 7)]
    pub guard_n: usize,
    /// Treat verbatim n-gram leakage as a chunk failure.
    #[arg(long)]
    pub strict_leakage: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Required for the KNOWLEDGE_UNITS condition.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value = "mock")]
    pub generator_model: String,
    /// Models to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "mock")]
    pub models: Vec<String>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "NO_CONTEXT,ORIGINAL_TEXT,KNOWLEDGE_UNITS"
    )]
    pub conditions: Vec<String>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 3)]
    pub question_sets: usize,
    #[arg(long, default_value_t = 3)]
    pub mcqs_per_abstract: usize,
    #[arg(long, default_value_t = 10)]
    pub mcqs_per_paper: usize,
    #[arg(long, default_value_t = 400)]
    pub abstract_max_words: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OverlapArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,7,11")]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub top_fraction: f64,
    /// `reconstructions.jsonl` from `reconstruct`, scored against the sources.
    #[arg(long)]
    pub reconstructions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value = "mock")]
    pub model: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `mock-bow`, or an embedding model id served by `--provider`.
    #[arg(long, default_value = MOCK_EMBEDDER)]
    pub embedder: String,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Only documents with at most this many words are used.
    #[arg(long, default_value_t = 400)]
    pub abstract_max_words: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Output directories of earlier runs; may be repeated.
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub top_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with status 2 when any finding is reported.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = 7)]
    pub guard_n: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub run_json: PathBuf,
}

/// Runs one command and returns its exit status.
pub fn run(command: &Command) -> Result<i32> {
    match command {
        Command::Extract(a) => commands::cmd_extract(a, command),
        Command::EvalMcq(a) => commands::cmd_eval_mcq(a, command),
        Command::Overlap(a) => commands::cmd_overlap(a, command),
        Command::Reconstruct(a) => commands::cmd_reconstruct(a, command),
        Command::EmbedBaseline(a) => commands::cmd_embed_baseline(a, command),
        Command::Report(a) => commands::cmd_report(a, command),
        Command::Validate(a) => commands::cmd_validate(a, command),
        Command::Replay(a) => commands::cmd_replay(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Usage errors exit with [`EXIT_FAILURE`]; help and version with 0.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_FAILURE
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}
