//! Uniform chat-completion interface over an OpenAI-compatible HTTP
//! endpoint and deterministic mock backends.
//!
//! [`LlmClient`] wraps any [`ChatBackend`] with retry (exponential
//! backoff with jitter on 429/5xx/timeouts), a max-in-flight bound and
//! an optional JSONL audit log. Every successful response carries both
//! token counts — reported by the API or estimated, with provenance
//! flagged.

mod audit;
mod http;
mod mock;

pub use audit::{parse_entries, AuditEntry, AuditLog};
pub use http::HttpBackend;
pub use mock::{Corruption, EchoOracle, PerturbingBackend, ScriptedBackend};

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Strategy;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RateLimitExhausted { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request timed out")]
    Timeout,
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("scripted backend has no reply for this prompt: {0}")]
    ScriptMiss(String),
}

impl ClientError {
    /// Transient failures worth retrying; auth and malformed payloads
    /// are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Timeout | ClientError::Transport(_) => true,
            ClientError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Identifies the request's document and step so scripted/oracle mocks
/// can answer without parsing prompt text. HTTP backends ignore it; it
/// is never serialized onto the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestTag {
    pub doc_id: String,
    pub strategy: Strategy,
    /// Step depth for the top-down strategy.
    pub depth: Option<u32>,
}

/// One chat-completion request: a single user message.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub model: String,
    pub prompt_text: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_completion_tokens: Option<u32>,
    pub tag: Option<RequestTag>,
}

impl ChatRequest {
    pub fn new(model: &str, prompt_text: impl Into<String>) -> Self {
        ChatRequest {
            model: model.to_string(),
            prompt_text: prompt_text.into(),
            temperature: 1.0,
            top_p: 1.0,
            max_completion_tokens: None,
            tag: None,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::MalformedResponse(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ClientError::MalformedResponse(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
}

/// Where a response's token counts came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageProvenance {
    ApiReported,
    Estimated,
    Mixed,
}

#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency: Duration,
    pub backend: BackendKind,
    pub usage: UsageProvenance,
}

/// A chat-completion provider. Implementations must be safe to share
/// across worker threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError>;
    fn kind(&self) -> BackendKind;
}

/// Deterministic token estimator used when a backend reports no usage:
/// whitespace-delimited words plus newline characters. Monotone under
/// extension — a string never estimates fewer tokens than any prefix.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.split_whitespace().count() + text.matches('\n').count()) as u64
}

/// Retry policy for transient failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Additional attempts after the first.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// No retries; used by tests and mock-only runs.
    pub fn none() -> Self {
        RetryPolicy { max_retries: 0, ..RetryPolicy::default() }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << attempt.min(16));
        let capped = exp.min(self.max_delay);
        // Jitter in [0.5, 1.5) so synchronized workers spread out.
        let factor = 0.5 + rand::random::<f64>();
        capped.mul_f64(factor)
    }
}

/// Counting semaphore bounding requests in flight.
struct Limiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter { permits: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().expect("limiter poisoned");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("limiter poisoned");
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.limiter.permits.lock().expect("limiter poisoned");
        *permits += 1;
        self.limiter.cv.notify_one();
    }
}

/// Retry/limit/audit wrapper around a [`ChatBackend`].
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    limiter: Option<Arc<Limiter>>,
    audit: Option<Arc<AuditLog>>,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        LlmClient { backend, retry: RetryPolicy::default(), limiter: None, audit: None }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Bound the number of requests in flight across all threads.
    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Some(Arc::new(Limiter::new(n)));
        self
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    /// Issue a request, retrying transient failures with exponential
    /// backoff and jitter. Auth errors are never retried.
    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        req.validate()?;
        let _permit = self.limiter.as_ref().map(|l| l.acquire());
        let mut attempt = 0u32;
        loop {
            let started = std::time::Instant::now();
            match self.backend.complete(req) {
                Ok(mut resp) => {
                    if resp.latency.is_zero() {
                        resp.latency = started.elapsed();
                    }
                    if let Some(audit) = &self.audit {
                        audit.record_ok(req, &resp, attempt + 1);
                    }
                    return Ok(resp);
                }
                Err(e) if e.is_retryable() && attempt < self.retry.max_retries => {
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(e) => {
                    let e = match e {
                        // Preserve the auth/malformed class; wrap other
                        // exhausted transients.
                        ClientError::Auth(_)
                        | ClientError::MalformedResponse(_)
                        | ClientError::ScriptMiss(_) => e,
                        other if other.is_retryable() && self.retry.max_retries > 0 => {
                            ClientError::RateLimitExhausted {
                                attempts: attempt + 1,
                                last: other.to_string(),
                            }
                        }
                        other => other,
                    };
                    if let Some(audit) = &self.audit {
                        audit.record_err(req, &e, attempt + 1);
                    }
                    return Err(e);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct FlakyBackend {
        failures: AtomicU32,
        error: fn() -> ClientError,
    }

    impl ChatBackend for FlakyBackend {
        fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
            if self.failures.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |f| {
                if f > 0 {
                    Some(f - 1)
                } else {
                    None
                }
            }).is_ok()
            {
                return Err((self.error)());
            }
            Ok(ChatResponse {
                text: "ok".into(),
                prompt_tokens: estimate_tokens(&req.prompt_text),
                completion_tokens: 1,
                latency: Duration::ZERO,
                backend: BackendKind::Mock,
                usage: UsageProvenance::Estimated,
            })
        }

        fn kind(&self) -> BackendKind {
            BackendKind::Mock
        }
    }

    fn fast_retry(n: u32) -> RetryPolicy {
        RetryPolicy {
            max_retries: n,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(2),
        }
    }

    #[test]
    fn estimate_tokens_examples() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("a b c"), 3);
        assert_eq!(estimate_tokens("a b\nc"), 4);
    }

    #[test]
    fn estimate_tokens_prefix_monotone() {
        let s = "one two\nthree four five\nsix";
        for i in 0..=s.len() {
            if s.is_char_boundary(i) {
                assert!(estimate_tokens(&s[..i]) <= estimate_tokens(s));
            }
        }
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let backend = Arc::new(FlakyBackend {
            failures: AtomicU32::new(2),
            error: || ClientError::Http { status: 429, body: "slow down".into() },
        });
        let client = LlmClient::new(backend).with_retry(fast_retry(3));
        let resp = client.complete(&ChatRequest::new("m", "p")).unwrap();
        assert_eq!(resp.text, "ok");
    }

    #[test]
    fn exhausted_retries_reported() {
        let backend = Arc::new(FlakyBackend {
            failures: AtomicU32::new(10),
            error: || ClientError::Http { status: 503, body: "down".into() },
        });
        let client = LlmClient::new(backend).with_retry(fast_retry(2));
        match client.complete(&ChatRequest::new("m", "p")) {
            Err(ClientError::RateLimitExhausted { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn auth_error_not_retried() {
        let backend = Arc::new(FlakyBackend {
            failures: AtomicU32::new(5),
            error: || ClientError::Auth("bad key".into()),
        });
        let client = LlmClient::new(backend.clone()).with_retry(fast_retry(5));
        match client.complete(&ChatRequest::new("m", "p")) {
            Err(ClientError::Auth(_)) => {}
            other => panic!("unexpected: {other:?}"),
        }
        // Only one attempt consumed.
        assert_eq!(backend.failures.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn request_validation() {
        let mut req = ChatRequest::new("m", "p");
        req.temperature = 3.0;
        let backend = Arc::new(FlakyBackend { failures: AtomicU32::new(0), error: || ClientError::Timeout });
        assert!(LlmClient::new(backend).complete(&req).is_err());
    }

    #[test]
    fn limiter_bounds_in_flight() {
        use std::sync::atomic::AtomicUsize;

        struct SlowBackend {
            current: AtomicUsize,
            peak: AtomicUsize,
        }
        impl ChatBackend for SlowBackend {
            fn complete(&self, _req: &ChatRequest) -> Result<ChatResponse, ClientError> {
                let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.current.fetch_sub(1, Ordering::SeqCst);
                Ok(ChatResponse {
                    text: "ok".into(),
                    prompt_tokens: 1,
                    completion_tokens: 1,
                    latency: Duration::ZERO,
                    backend: BackendKind::Mock,
                    usage: UsageProvenance::Estimated,
                })
            }
            fn kind(&self) -> BackendKind {
                BackendKind::Mock
            }
        }

        let backend = Arc::new(SlowBackend {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let client = LlmClient::new(backend.clone()).with_max_in_flight(2);
        std::thread::scope(|s| {
            for _ in 0..8 {
                let client = client.clone();
                s.spawn(move || client.complete(&ChatRequest::new("m", "p")).unwrap());
            }
        });
        assert!(backend.peak.load(Ordering::SeqCst) <= 2);
    }
}
