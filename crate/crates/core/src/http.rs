//! Blocking JSON-over-HTTP client shared by the remote embedding and LLM
//! providers: bounded retries with exponential backoff, a response size
//! limit, an optional request-rate limiter and a request counter.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HttpError {
    #[error("{provider}: authentication failed with HTTP {status}")]
    Auth { provider: String, status: u16, body: String },
    #[error("{provider}: HTTP {status}: {body}")]
    Status { provider: String, status: u16, body: String },
    #[error("{provider}: transport error: {message}")]
    Transport { provider: String, message: String },
    #[error("{provider}: response larger than {limit} bytes")]
    TooLarge { provider: String, limit: u64 },
    #[error("{provider}: undecodable response: {message}")]
    Decode { provider: String, message: String },
}

impl HttpError {
    /// Rate limiting, server errors and transport failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Transport { .. } => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Spaces requests at least `min_interval` apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        RateLimiter { min_interval, next: Mutex::new(Instant::now()) }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.min_interval;
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

pub struct JsonClient {
    agent: ureq::Agent,
    provider: String,
    retry: RetryPolicy,
    max_response_bytes: u64,
    limiter: Option<RateLimiter>,
    requests: AtomicUsize,
}

impl JsonClient {
    pub fn new(provider: impl Into<String>, retry: RetryPolicy, max_response_bytes: u64) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        JsonClient {
            agent,
            provider: provider.into(),
            retry,
            max_response_bytes,
            limiter: None,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn with_rate_limit(mut self, min_interval: Duration) -> Self {
        self.limiter = Some(RateLimiter::new(min_interval));
        self
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    /// HTTP requests sent so far, retries included.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn post_json(&self, url: &str, headers: &[(&str, String)], body: &Value) -> Result<Value, HttpError> {
        let mut attempt = 0;
        loop {
            match self.post_once(url, headers, body) {
                Err(e) if e.is_retryable() && attempt + 1 < self.retry.max_attempts => {
                    log::warn!("{e}; retrying (attempt {})", attempt + 2);
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once(&self, url: &str, headers: &[(&str, String)], body: &Value) -> Result<Value, HttpError> {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        self.requests.fetch_add(1, Ordering::Relaxed);
        let provider = || self.provider.clone();
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(*k, v.as_str());
        }
        let mut resp = req.send_json(body).map_err(|e| HttpError::Transport { provider: provider(), message: e.to_string() })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().with_config().limit(self.max_response_bytes).read_to_string().map_err(|e| match e {
            ureq::Error::BodyExceedsLimit(limit) => HttpError::TooLarge { provider: provider(), limit },
            e => HttpError::Transport { provider: provider(), message: e.to_string() },
        })?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| HttpError::Decode { provider: provider(), message: e.to_string() }),
            401 | 403 => Err(HttpError::Auth { provider: provider(), status, body: text }),
            _ => Err(HttpError::Status { provider: provider(), status, body: text }),
        }
    }
}

/// Reads an API key from the environment.
pub fn api_key_from_env(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|k| !k.trim().is_empty())
}
