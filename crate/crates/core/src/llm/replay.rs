//! Deterministic replay transport and a recorder that produces fixtures.
//!
//! A fixture is a JSON document:
//!
//! ```json
//! {"entries": [
//!   {"endpoint": "chat/completions", "contains": ["Student Answer: Voltage is"],
//!    "replies": [{"status": 429, "retry_after": 0}, {"content": "[[2]]"}]},
//!   {"digest": "3f1c…", "replies": [{"embeddings": [[0.1, 0.2]]}]}
//! ]}
//! ```
//!
//! An entry matches when its optional `endpoint` and `digest` equal the
//! request's and every `contains` string occurs in the request text. The
//! first matching entry answers. Replies are consumed in order per distinct
//! request digest and the last one repeats, so concurrent requests never
//! disturb each other's sequence.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::transport::{Endpoint, HttpReply, Transport, TransportError, WireRequest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayFixture {
    #[serde(default)]
    pub entries: Vec<ReplayEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    pub replies: Vec<ReplayReply>,
}

/// One canned reply. `content` builds a chat completion, `embeddings` an
/// embeddings response, `body` is sent verbatim (strings unquoted), and
/// `network_error` simulates a connection failure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_error: Option<String>,
}

impl ReplayReply {
    pub fn content(text: impl Into<String>) -> Self {
        ReplayReply {
            content: Some(text.into()),
            ..Default::default()
        }
    }

    fn to_http(&self) -> std::result::Result<HttpReply, TransportError> {
        if let Some(msg) = &self.network_error {
            return Err(TransportError {
                message: format!("simulated network failure: {msg}"),
                retryable: true,
            });
        }
        let body = if let Some(content) = &self.content {
            json!({
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
                "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0}
            })
            .to_string()
        } else if let Some(vectors) = &self.embeddings {
            let data: Vec<Value> = vectors
                .iter()
                .enumerate()
                .map(|(i, v)| json!({"object": "embedding", "index": i, "embedding": v}))
                .collect();
            json!({"object": "list", "data": data}).to_string()
        } else {
            match &self.body {
                Some(Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
                None => String::new(),
            }
        };
        Ok(HttpReply {
            status: self.status.unwrap_or(200),
            retry_after: self.retry_after,
            body,
        })
    }
}

impl ReplayEntry {
    fn matches(&self, req: &WireRequest<'_>) -> bool {
        self.endpoint
            .as_deref()
            .is_none_or(|e| Endpoint::parse(e) == Some(req.endpoint))
            && self.digest.as_deref().is_none_or(|d| d == req.digest)
            && self.contains.iter().all(|c| req.text.contains(c.as_str()))
    }
}

impl ReplayFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("replay fixture {}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

pub struct ReplayTransport {
    fixture: ReplayFixture,
    cursors: Mutex<HashMap<(usize, String), usize>>,
}

impl ReplayTransport {
    pub fn new(fixture: ReplayFixture) -> Self {
        ReplayTransport {
            fixture,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(ReplayTransport::new(ReplayFixture::load(path)?))
    }
}

impl Transport for ReplayTransport {
    fn send(&self, req: &WireRequest<'_>) -> std::result::Result<HttpReply, TransportError> {
        let Some((idx, entry)) = self
            .fixture
            .entries
            .iter()
            .enumerate()
            .find(|(_, e)| e.matches(req))
        else {
            return Err(TransportError {
                message: format!(
                    "no replay entry matches {} request {}",
                    req.endpoint.path(),
                    req.digest
                ),
                retryable: false,
            });
        };
        if entry.replies.is_empty() {
            return Err(TransportError {
                message: format!("replay entry {idx} has no replies"),
                retryable: false,
            });
        }
        let pos = {
            let mut cursors = self.cursors.lock().expect("replay cursor lock");
            let cursor = cursors.entry((idx, req.digest.to_string())).or_insert(0);
            let pos = (*cursor).min(entry.replies.len() - 1);
            *cursor += 1;
            pos
        };
        entry.replies[pos].to_http()
    }

    fn needs_api_key(&self) -> bool {
        false
    }
}

/// Wraps a transport and records every exchange so it can be replayed.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    log: Mutex<Vec<(Endpoint, String, ReplayReply)>>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        RecordingTransport {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Fixture with one digest-keyed entry per distinct request, in first-seen order.
    pub fn fixture(&self) -> ReplayFixture {
        let log = self.log.lock().expect("recording lock");
        let mut entries: Vec<ReplayEntry> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (endpoint, digest, reply) in log.iter() {
            let i = *index.entry(digest.as_str()).or_insert_with(|| {
                entries.push(ReplayEntry {
                    endpoint: Some(endpoint.path().to_string()),
                    digest: Some(digest.clone()),
                    contains: Vec::new(),
                    replies: Vec::new(),
                });
                entries.len() - 1
            });
            entries[i].replies.push(reply.clone());
        }
        ReplayFixture { entries }
    }
}

impl Transport for RecordingTransport {
    fn send(&self, req: &WireRequest<'_>) -> std::result::Result<HttpReply, TransportError> {
        let result = self.inner.send(req);
        let reply = match &result {
            Ok(r) => ReplayReply {
                status: Some(r.status),
                retry_after: r.retry_after,
                body: Some(serde_json::from_str(&r.body).unwrap_or_else(|_| Value::String(r.body.clone()))),
                ..Default::default()
            },
            Err(e) => ReplayReply {
                network_error: Some(e.message.clone()),
                ..Default::default()
            },
        };
        self.log
            .lock()
            .expect("recording lock")
            .push((req.endpoint, req.digest.to_string(), reply));
        result
    }

    fn needs_api_key(&self) -> bool {
        self.inner.needs_api_key()
    }
}
