//! Run configuration file and its merge with command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rubricbench::llm::ModelConfig;
use rubricbench::synthesis::SynthesisMethod;
use rubricbench::LabelScheme;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_GRADING_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_GENERATION_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-small";
pub const DEFAULT_OUT: &str = "rubricbench-out";

/// JSON document accepted by `--config`. Every field is optional and any
/// matching flag takes precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub scheme: Option<LabelScheme>,
    /// `rubric` or `examples-k<k>`.
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub max_in_flight: Option<usize>,
    pub requests_per_minute: Option<u32>,
    pub grading_model: Option<ModelSection>,
    pub generation_model: Option<ModelSection>,
    pub embedding_model: Option<ModelSection>,
    pub synthesis: Option<SynthesisConfig>,
}

/// Partial model settings; unset fields keep the defaults of the model's role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub api_key_env: Option<String>,
}

impl ModelSection {
    fn apply(&self, cfg: &mut ModelConfig) {
        if let Some(v) = &self.base_url {
            cfg.base_url = v.clone();
        }
        if let Some(v) = &self.model_name {
            cfg.model_name = v.clone();
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.max_tokens {
            cfg.max_tokens = v;
        }
        if let Some(v) = &self.api_key_env {
            cfg.api_key_env = v.clone();
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub method: Option<SynthesisMethod>,
    pub per_label: Option<usize>,
    pub cases_per_question: Option<usize>,
    pub target_total: Option<usize>,
    pub length_range: Option<(usize, usize)>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }
}

/// Model flags shared by commands that call an endpoint.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelFlags {
    /// Base URL of an OpenAI-compatible API.
    #[arg(long)]
    pub base_url: Option<String>,
    /// Grading model name.
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Sampling temperature for the grading model.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

/// Transport flags shared by commands that call an endpoint.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TransportFlags {
    /// Directory for the response cache.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Answer requests from a replay fixture instead of the network.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Record every exchange into a replay fixture at this path.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Upper bound on concurrent requests.
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Request rate limit for network calls.
    #[arg(long)]
    pub rpm: Option<u32>,
}

/// Apply flag overrides on top of a configured (or default) model.
pub fn resolve_model(
    configured: Option<&ModelSection>,
    default: ModelConfig,
    base_url: Option<&str>,
    flags: &ModelFlags,
    model: Option<&str>,
    temperature: Option<f64>,
) -> anyhow::Result<ModelConfig> {
    let mut cfg = default;
    if let Some(section) = configured {
        section.apply(&mut cfg);
    }
    if let Some(url) = base_url {
        cfg.base_url = url.to_string();
    }
    if let Some(m) = model {
        cfg.model_name = m.to_string();
    }
    if let Some(t) = temperature {
        cfg.temperature = t;
    }
    if let Some(env) = &flags.api_key_env {
        cfg.api_key_env = env.clone();
    }
    if let Some(n) = flags.max_tokens {
        cfg.max_tokens = n;
    }
    cfg.validate().context("model configuration")?;
    Ok(cfg)
}

pub fn grading_model(run: &RunConfig, flags: &ModelFlags) -> anyhow::Result<ModelConfig> {
    resolve_model(
        run.grading_model.as_ref(),
        ModelConfig::grading(DEFAULT_BASE_URL, DEFAULT_GRADING_MODEL),
        flags.base_url.as_deref(),
        flags,
        flags.model.as_deref(),
        flags.temperature,
    )
}

pub fn scheme(flag: Option<LabelScheme>, run: &RunConfig) -> LabelScheme {
    flag.or(run.scheme).unwrap_or(LabelScheme::ThreeWay)
}

pub fn seed(flag: Option<u64>, run: &RunConfig) -> u64 {
    flag.or(run.seed).unwrap_or(0)
}

pub fn out_dir(flag: Option<&PathBuf>, run: &RunConfig) -> PathBuf {
    flag.cloned()
        .or_else(|| run.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Positional path if given, else the configured one.
pub fn dataset_path(flag: Option<&PathBuf>, configured: Option<&PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    let path = flag
        .or(configured)
        .cloned()
        .ok_or_else(|| UsageError(format!("no {what} given (pass a path or set it in --config)")))?;
    require_file(&path)?;
    Ok(path)
}

pub fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("input file not found: {}", path.display())).into());
    }
    Ok(())
}
