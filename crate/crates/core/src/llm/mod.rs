//! Chat-completions client: request/response types, transports (HTTP,
//! replay, recording), a content-addressed disk cache, bounded retries and
//! rate limiting.

mod cache;
mod client;
mod replay;
mod transport;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::prompting::{ChatMessage, PromptText};

pub use cache::DiskCache;
pub use client::{ClientStats, LlmClient, RateLimiter, RetryPolicy, DEFAULT_MAX_IN_FLIGHT};
pub use replay::{RecordingTransport, ReplayEntry, ReplayFixture, ReplayReply, ReplayTransport};
pub use transport::{Endpoint, HttpReply, HttpTransport, Transport, TransportError, WireRequest};

pub const DEFAULT_API_KEY_ENV: &str = "RUBRICBENCH_API_KEY";
pub const GRADING_TEMPERATURE: f64 = 0.0;
pub const GENERATION_TEMPERATURE: f64 = 1.3;

/// Endpoint and sampling settings for one model. Holds the *name* of the
/// environment variable with the API key, never the key itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

impl ModelConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: GRADING_TEMPERATURE,
            max_tokens: 512,
            api_key_env: default_key_env(),
        }
    }

    pub fn grading(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelConfig::new(base_url, model_name)
    }

    pub fn generation(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelConfig {
            temperature: GENERATION_TEMPERATURE,
            ..ModelConfig::new(base_url, model_name)
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(crate::Error::InvalidInput(format!(
                "temperature {} must be a non-negative number",
                self.temperature
            )));
        }
        if self.model_name.trim().is_empty() {
            return Err(crate::Error::InvalidInput("model_name is empty".into()));
        }
        Ok(())
    }
}

/// Wire body of a chat-completions request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Sampling seed; also distinguishes otherwise identical generation
    /// requests in the cache.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(cfg: &ModelConfig, prompt: &PromptText) -> Self {
        ChatRequest {
            model: cfg.model_name.clone(),
            messages: prompt.messages.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// SHA-256 over the request serialized in struct field order.
    pub fn digest(&self) -> String {
        digest_bytes(&serde_json::to_vec(self).expect("request serializes"))
    }

    /// Concatenated message contents, used by replay matching.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: String,
    #[serde(default)]
    pub usage: Usage,
}

impl ChatResponse {
    /// Parse the first choice of a chat-completions response body.
    pub fn from_body(body: &str) -> crate::Result<Self> {
        let v: Value = serde_json::from_str(body)
            .map_err(|e| crate::Error::Transport(format!("completion body is not JSON: {e}")))?;
        let choice = v
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| crate::Error::Transport(format!("completion has no choices: {}", excerpt(body))))?;
        let content = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let finish_reason = choice
            .get("finish_reason")
            .and_then(Value::as_str)
            .unwrap_or("unknown")
            .to_string();
        let usage = v
            .get("usage")
            .cloned()
            .and_then(|u| serde_json::from_value(u).ok())
            .unwrap_or_default();
        Ok(ChatResponse {
            content,
            finish_reason,
            usage,
        })
    }
}

pub(crate) fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn excerpt(body: &str) -> String {
    const MAX: usize = 300;
    if body.len() <= MAX {
        body.to_string()
    } else {
        let mut end = MAX;
        while !body.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &body[..end])
    }
}
