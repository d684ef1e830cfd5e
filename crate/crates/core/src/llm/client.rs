use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::cache::DiskCache;
use super::transport::{Endpoint, Transport, WireRequest};
use super::{digest_bytes, excerpt, ChatRequest, ChatResponse, ModelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Same attempt budget, no waiting. For tests and replay runs.
    pub fn immediate() -> Self {
        RetryPolicy {
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..RetryPolicy::default()
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Token bucket shared by all in-flight requests.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        RateLimiter {
            capacity,
            per_second: f64::from(requests.max(1)) / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter lock");
                let now = Instant::now();
                let (tokens, last) = *state;
                let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.per_second).min(self.capacity);
                if tokens >= 1.0 {
                    *state = (tokens - 1.0, now);
                    return;
                }
                *state = (tokens, now);
                (1.0 - tokens) / self.per_second
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub transport_calls: usize,
    pub cache_hits: usize,
    pub retries: usize,
}

/// Shareable client. Cloning is cheap and clones share counters and limits.
#[derive(Clone)]
pub struct LlmClient {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
    cache: Option<DiskCache>,
    max_in_flight: usize,
    transport_calls: Arc<AtomicUsize>,
    cache_hits: Arc<AtomicUsize>,
    retries: Arc<AtomicUsize>,
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

impl LlmClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        LlmClient {
            transport,
            retry: RetryPolicy::default(),
            limiter: None,
            cache: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            transport_calls: Arc::default(),
            cache_hits: Arc::default(),
            retries: Arc::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(Arc::new(limiter));
        self
    }

    pub fn with_cache(mut self, cache_dir: impl Into<std::path::PathBuf>) -> Self {
        self.cache = Some(DiskCache::new(cache_dir));
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            transport_calls: self.transport_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            retries: self.retries.load(Ordering::SeqCst),
        }
    }

    fn api_key(&self, cfg: &ModelConfig) -> Result<Option<String>> {
        if !self.transport.needs_api_key() {
            return Ok(None);
        }
        match std::env::var(&cfg.api_key_env) {
            Ok(k) if !k.is_empty() => Ok(Some(k)),
            _ => Err(Error::MissingApiKey(cfg.api_key_env.clone())),
        }
    }

    /// POST with bounded retries. Network failures, 429 and 5xx are retried;
    /// 429 waits for `retry-after` when present.
    fn send_with_retries(&self, cfg: &ModelConfig, endpoint: Endpoint, body: &Value, digest: &str, text: &str) -> Result<String> {
        let key = self.api_key(cfg)?;
        let wire = WireRequest {
            base_url: &cfg.base_url,
            endpoint,
            api_key: key.as_deref(),
            body,
            digest,
            text,
        };
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            self.transport_calls.fetch_add(1, Ordering::SeqCst);
            let wait = match self.transport.send(&wire) {
                Ok(reply) if (200..300).contains(&reply.status) => return Ok(reply.body),
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    if attempt >= max {
                        return Err(Error::Http {
                            status: reply.status,
                            body: excerpt(&reply.body),
                        });
                    }
                    match reply.retry_after {
                        Some(secs) if reply.status == 429 && secs.is_finite() && secs >= 0.0 => {
                            Duration::from_secs_f64(secs)
                        }
                        _ => self.retry.backoff(attempt),
                    }
                }
                Ok(reply) => {
                    return Err(Error::Http {
                        status: reply.status,
                        body: excerpt(&reply.body),
                    })
                }
                Err(e) if e.retryable && attempt < max => self.retry.backoff(attempt),
                Err(e) => return Err(Error::Transport(e.message)),
            };
            self.retries.fetch_add(1, Ordering::SeqCst);
            log::debug!("retrying {} after {:?} (attempt {attempt}/{max})", endpoint.path(), wait);
            if !wait.is_zero() {
                thread::sleep(wait);
            }
        }
    }

    /// One chat completion through the transport, bypassing any cache.
    pub fn complete(&self, cfg: &ModelConfig, req: &ChatRequest) -> Result<ChatResponse> {
        let body = serde_json::to_value(req)?;
        let text = req.text();
        let raw = self.send_with_retries(cfg, Endpoint::ChatCompletions, &body, &req.digest(), &text)?;
        ChatResponse::from_body(&raw)
    }

    /// Completion through the disk cache at `cache_dir`.
    pub fn cached_complete(&self, cfg: &ModelConfig, req: &ChatRequest, cache: &DiskCache) -> Result<ChatResponse> {
        if let Some(hit) = cache.get(req) {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let resp = self.complete(cfg, req)?;
        cache.put(req, &resp)?;
        Ok(resp)
    }

    /// Completion through the client's configured cache, if any.
    pub fn chat(&self, cfg: &ModelConfig, req: &ChatRequest) -> Result<ChatResponse> {
        match &self.cache {
            Some(cache) => self.cached_complete(cfg, req, cache),
            None => self.complete(cfg, req),
        }
    }

    /// Run many requests with bounded parallelism; results keep input order.
    pub fn chat_many(&self, cfg: &ModelConfig, reqs: &[ChatRequest]) -> Vec<Result<ChatResponse>> {
        let n = reqs.len();
        let workers = self.max_in_flight.min(n);
        if workers <= 1 {
            return reqs.iter().map(|r| self.chat(cfg, r)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<ChatResponse>>>> = Mutex::new((0..n).map(|_| None).collect());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let out = self.chat(cfg, &reqs[i]);
                    slots.lock().expect("result slots")[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .expect("result slots")
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect()
    }

    /// Embed texts via `<base_url>/embeddings`; one vector per text, all of
    /// the same dimension.
    pub fn embed(&self, cfg: &ModelConfig, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({"model": cfg.model_name, "input": texts});
        let digest = digest_bytes(&serde_json::to_vec(&body)?);
        let raw = self.send_with_retries(cfg, Endpoint::Embeddings, &body, &digest, &texts.join("\n"))?;
        let v: Value = serde_json::from_str(&raw)
            .map_err(|e| Error::Transport(format!("embeddings body is not JSON: {e}")))?;
        let data = v
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Transport(format!("embeddings reply has no data: {}", excerpt(&raw))))?;
        let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
            let vector: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Transport(format!("embedding {pos} is missing")))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| Error::Transport(format!("embedding {pos} has a non-number"))))
                .collect::<Result<_>>()?;
            rows.push((index, vector));
        }
        rows.sort_by_key(|(i, _)| *i);
        if rows.len() != texts.len() {
            return Err(Error::Transport(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                rows.len()
            )));
        }
        let dim = rows[0].1.len();
        if dim == 0 || rows.iter().any(|(_, v)| v.len() != dim) {
            return Err(Error::Transport("embedding dimensions differ within one reply".into()));
        }
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}
