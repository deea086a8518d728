//! Chat-completion gateway.
//!
//! [`Gateway`] wraps a [`ChatProvider`] (an OpenAI-compatible HTTP endpoint,
//! the scripted [`MockProvider`], or a [`ReplayProvider`] reading an audit log)
//! and adds retries with exponential backoff, a bound on in-flight requests,
//! and optional audit logging.

mod audit;
mod http;
mod mock;

pub use audit::{AuditLog, AuditRecord, ReplayProvider};
pub use http::{HttpProvider, HttpProviderConfig};
pub use mock::{MergeMode, MockProvider, MockScript};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

/// What a prompt asks for. Used to pick per-class settings and mock handlers;
/// it is not sent over the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptClass {
    Comment,
    Reply,
    ChainSelect,
    Sentiment,
    Framing,
    Propaganda,
    Retrieval,
    Stance,
    Response,
    EnsembleMerge,
    ExpertSelect,
    Generic,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RequestError {
    #[error("user text must not be empty")]
    EmptyUser,
    #[error("temperature {0} outside [0, 2]")]
    Temperature(f64),
    #[error("max output tokens must be positive")]
    MaxTokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_logprob: bool,
    pub class: PromptClass,
}

impl ChatRequest {
    pub fn new(class: PromptClass, user: impl Into<String>) -> Result<Self, RequestError> {
        let req = Self {
            system: None,
            user: user.into(),
            temperature: 0.6,
            max_tokens: 256,
            want_logprob: false,
            class,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), RequestError> {
        if self.user.is_empty() {
            return Err(RequestError::EmptyUser);
        }
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return Err(RequestError::Temperature(self.temperature));
        }
        if self.max_tokens == 0 {
            return Err(RequestError::MaxTokens);
        }
        Ok(())
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn with_logprob(mut self, want: bool) -> Self {
        self.want_logprob = want;
        self
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }

    /// SHA-256 over the canonical JSON form of the request.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    /// Probability of the first label-bearing output token, when requested
    /// and supported by the provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_prob: Option<f64>,
    pub provider: String,
    pub latency_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    Request(#[from] RequestError),
    /// Connection-level failure; retried.
    #[error("transport error: {0}")]
    Transport(String),
    /// Retryable HTTP status (429 or 5xx).
    #[error("provider returned retryable status {status}: {body}")]
    Retryable { status: u16, body: String },
    /// Non-retryable rejection (4xx other than 429).
    #[error("provider rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("no recorded response for request {0}")]
    NotRecorded(String),
}

impl LlmError {
    fn is_transient(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::Retryable { .. })
    }
}

/// One attempt at a completion. Implementations do not retry.
pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().expect("semaphore poisoned");
        while *p == 0 {
            p = self.cv.wait(p).expect("semaphore poisoned");
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// Shareable chat-completion entry point.
pub struct Gateway {
    provider: Box<dyn ChatProvider>,
    retry: RetryPolicy,
    inflight: Semaphore,
    audit: Option<AuditLog>,
}

impl Gateway {
    pub fn new(provider: impl ChatProvider + 'static) -> Self {
        Self {
            provider: Box::new(provider),
            retry: RetryPolicy::default(),
            inflight: Semaphore::new(4),
            audit: None,
        }
    }

    pub fn mock(script: MockScript) -> Self {
        Self::new(MockProvider::new(script))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.inflight = Semaphore::new(n);
        self
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    /// Sends `request`, retrying transport failures, 429 and 5xx responses.
    /// Other 4xx responses fail immediately.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let _permit = self.inflight.acquire();
        let started = Instant::now();
        let mut attempt = 0u32;
        loop {
            match self.provider.send(request) {
                Ok(mut resp) => {
                    resp.latency_ms = started.elapsed().as_millis() as u64;
                    if let Some(audit) = &self.audit {
                        audit.record(request, &resp);
                    }
                    return Ok(resp);
                }
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    log::warn!("llm attempt {} failed ({e}); retrying", attempt + 1);
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(e) if e.is_transient() => {
                    return Err(LlmError::Exhausted {
                        attempts: attempt + 1,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Confidence of a label-emitting answer: the first label token's probability
/// clamped to `[0.5, 1]`, or `None` when the provider supplied no logprobs.
pub fn prediction_confidence(response: &ChatResponse) -> Option<f64> {
    response
        .token_prob
        .filter(|p| p.is_finite())
        .map(|p| p.clamp(0.5, 1.0))
}
