//! `rubricbench` command-line front end.
//!
//! Every command that writes files puts them under `--out <dir>` together
//! with a `manifest.json` describing the resolved configuration, template
//! hashes and input/output digests.

mod commands;
pub mod config;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rubricbench::llm::{
    HttpTransport, LlmClient, RateLimiter, RecordingTransport, ReplayTransport, RetryPolicy, Transport,
};
use rubricbench::LabelScheme;

pub use config::RunConfig;
use config::{ModelFlags, TransportFlags};

/// Error caused by arguments or inputs rather than by the system.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 1 for user and validation errors, 2 for transport and system errors.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<rubricbench::Error>() {
            return if e.is_user_error() { 1 } else { 2 };
        }
    }
    2
}

#[derive(Debug, Parser)]
#[command(name = "rubricbench", version, about = "Rubric-driven grading experiments with LLMs")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSONL dataset and print statistics.
    Import(ImportArgs),
    /// Carve a validation split out of the training samples.
    Split(SplitArgs),
    /// Generate a meta-question dataset from a 2-way base dataset.
    SynthMeta(SynthMetaArgs),
    /// Grade samples with an LLM and write per-sample results.
    Grade(GradeArgs),
    /// Compute accuracy, macro-F1 and bootstrap intervals from results.
    Eval(EvalArgs),
    /// Replace labels with LLM grades.
    Relabel(RelabelArgs),
    /// Synthesize training data.
    SynthData(SynthDataArgs),
    /// Tables and a bar chart across several result files.
    Report(ReportArgs),
    /// Embedding similarity between rubrics, solutions and answers.
    Similarity(SimilarityArgs),
    /// Feedback annotation sheets.
    #[command(subcommand)]
    Annotate(AnnotateCommand),
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<LabelScheme>,
    /// Labels use the 5-way annotation and are collapsed into the scheme.
    #[arg(long)]
    pub five_way: bool,
    /// Write the validated dataset in canonical form.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<LabelScheme>,
    /// Fraction of training samples moved to validation.
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MetaModeArg {
    Random,
    Fixed,
}

#[derive(Debug, Args)]
pub struct SynthMetaArgs {
    /// Base dataset with 2-way labels.
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = MetaModeArg::Random)]
    pub mode: MetaModeArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leave rubric_text empty in the written samples.
    #[arg(long)]
    pub no_rubric: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PromptModeArg {
    Rubric,
    Examples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<PromptModeArg>,
    /// Examples per label in examples mode (0 to 5).
    #[arg(long)]
    pub k: Option<u8>,
    /// Score tiers: 2 or 3.
    #[arg(long)]
    pub tier: Option<LabelScheme>,
    /// Dataset supplying few-shot examples (default: the graded file's train split).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Which samples to grade.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Ask for a written rationale before the score.
    #[arg(long)]
    pub feedback: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub transport: TransportFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// A results.jsonl written by `grade`.
    pub results: PathBuf,
    /// Add a per-question accuracy table.
    #[arg(long)]
    pub by_question: bool,
    #[arg(long, default_value_t = 2000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RelabelArgs {
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<LabelScheme>,
    #[arg(long, value_enum)]
    pub mode: Option<PromptModeArg>,
    #[arg(long)]
    pub k: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub transport: TransportFlags,
}

#[derive(Debug, Args)]
pub struct SynthDataArgs {
    /// Source dataset; its training questions seed the synthesis.
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<rubricbench::synthesis::SynthesisMethod>,
    #[arg(long)]
    pub scheme: Option<LabelScheme>,
    /// Responses per label per question (labels-and-responses).
    #[arg(long)]
    pub per_label: Option<usize>,
    /// Case statements requested per question (diversity).
    #[arg(long)]
    pub cases: Option<usize>,
    /// Total responses across all questions (diversity).
    #[arg(long)]
    pub target_total: Option<usize>,
    /// Generation model name.
    #[arg(long)]
    pub gen_model: Option<String>,
    #[arg(long)]
    pub gen_base_url: Option<String>,
    #[arg(long)]
    pub gen_temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub transport: TransportFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// results.jsonl files, one per run.
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub resamples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<LabelScheme>,
    /// Embedding model name.
    #[arg(long)]
    pub embed_model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub transport: TransportFlags,
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCommand {
    /// Sample a fillable annotation sheet from grading results.
    Sample(AnnotateSampleArgs),
    /// Summarize a completed sheet.
    Summarize(AnnotateSummarizeArgs),
}

#[derive(Debug, Args)]
pub struct AnnotateSampleArgs {
    pub results: PathBuf,
    /// disagreement or agreed-partially-correct
    #[arg(long, default_value = "disagreement")]
    pub condition: rubricbench::evaluation::AnnotationCondition,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateSummarizeArgs {
    pub sheet: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Client plus the recorder to flush afterwards, if recording.
pub(crate) struct ClientSetup {
    pub client: LlmClient,
    pub recorder: Option<(Arc<RecordingTransport>, PathBuf)>,
    pub replay: Option<PathBuf>,
}

impl ClientSetup {
    pub fn finish(&self) -> anyhow::Result<()> {
        if let Some((rec, path)) = &self.recorder {
            rec.fixture().save(path)?;
            log::info!("recorded fixture written to {}", path.display());
        }
        Ok(())
    }
}

pub(crate) fn build_client(flags: &TransportFlags, run: &RunConfig) -> anyhow::Result<ClientSetup> {
    let replay = flags.replay.clone().or_else(|| run.replay.clone());
    let max_in_flight = flags
        .max_in_flight
        .or(run.max_in_flight)
        .unwrap_or(rubricbench::llm::DEFAULT_MAX_IN_FLIGHT);
    let (inner, retry, limiter): (Arc<dyn Transport>, _, _) = match &replay {
        Some(path) => {
            config::require_file(path)?;
            (Arc::new(ReplayTransport::from_file(path)?), RetryPolicy::immediate(), None)
        }
        None => {
            let rpm = flags.rpm.or(run.requests_per_minute).unwrap_or(60);
            (
                Arc::new(HttpTransport::default()),
                RetryPolicy::default(),
                Some(RateLimiter::per_minute(rpm, max_in_flight as u32)),
            )
        }
    };
    let (transport, recorder) = match &flags.record {
        Some(path) => {
            let rec = Arc::new(RecordingTransport::new(inner));
            (rec.clone() as Arc<dyn Transport>, Some((rec, path.clone())))
        }
        None => (inner, None),
    };
    let mut client = LlmClient::new(transport)
        .with_retry(retry)
        .with_max_in_flight(max_in_flight);
    if let Some(limiter) = limiter {
        client = client.with_rate_limit(limiter);
    }
    if let Some(dir) = flags.cache_dir.clone().or_else(|| run.cache_dir.clone()) {
        client = client.with_cache(dir);
    }
    Ok(ClientSetup {
        client,
        recorder,
        replay,
    })
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let run = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Import(a) => commands::import(a, &run),
        Command::Split(a) => commands::split(a, &run),
        Command::SynthMeta(a) => commands::synth_meta(a, &run),
        Command::Grade(a) => commands::grade(a, &run),
        Command::Eval(a) => commands::eval(a, &run),
        Command::Relabel(a) => commands::relabel(a, &run),
        Command::SynthData(a) => commands::synth_data(a, &run),
        Command::Report(a) => report::report(a, &run),
        Command::Similarity(a) => commands::similarity(a, &run),
        Command::Annotate(AnnotateCommand::Sample(a)) => commands::annotate_sample(a, &run),
        Command::Annotate(AnnotateCommand::Summarize(a)) => commands::annotate_summarize(a),
    }
}
