use std::time::Duration;

use serde_json::Value;

/// Remote API surface addressed by a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    ChatCompletions,
    Embeddings,
}

impl Endpoint {
    pub fn path(self) -> &'static str {
        match self {
            Endpoint::ChatCompletions => "chat/completions",
            Endpoint::Embeddings => "embeddings",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim_start_matches('/') {
            "chat/completions" => Some(Endpoint::ChatCompletions),
            "embeddings" => Some(Endpoint::Embeddings),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WireRequest<'a> {
    pub base_url: &'a str,
    pub endpoint: Endpoint,
    pub api_key: Option<&'a str>,
    pub body: &'a Value,
    /// Stable digest of the logical request.
    pub digest: &'a str,
    /// Message or input text, for content-based replay matching.
    pub text: &'a str,
}

impl WireRequest<'_> {
    pub fn url(&self) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), self.endpoint.path())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    /// Seconds from a `retry-after` header.
    pub retry_after: Option<f64>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Moves one request body to an endpoint and returns the raw reply.
pub trait Transport: Send + Sync {
    fn send(&self, req: &WireRequest<'_>) -> Result<HttpReply, TransportError>;

    /// Whether requests need an API key from the environment.
    fn needs_api_key(&self) -> bool {
        true
    }
}

/// Blocking HTTPS transport for OpenAI-compatible endpoints.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport::new(Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &WireRequest<'_>) -> Result<HttpReply, TransportError> {
        let mut builder = self.agent.post(req.url()).header("Content-Type", "application/json");
        if let Some(key) = req.api_key {
            builder = builder.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = builder.send_json(req.body).map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok());
        let body = resp.body_mut().read_to_string().map_err(|e| TransportError {
            message: format!("reading response body: {e}"),
            retryable: true,
        })?;
        Ok(HttpReply {
            status,
            retry_after,
            body,
        })
    }
}
