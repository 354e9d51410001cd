//! Model access layer.
//!
//! Everything that talks to a vision-language model goes through a
//! [`Gateway`], which wraps a [`ChatBackend`] (HTTP endpoint, scripted mock,
//! or the run-store cache) with request validation, bounded concurrency,
//! retries with exponential backoff, and a request log.

mod http;
mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::HttpBackend;
pub use mock::{MockEntry, MockModel, MockScript};

/// Reference to the image attached to a request: a local file path, an
/// `http(s)://` or `data:` URL, or an opaque identifier understood by the
/// backend.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(pub String);

impl ImageRef {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ImageRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, text: text.into() }
    }
    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into() }
    }
}

/// Decoding parameters. `temperature == 0` requests greedy decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SamplingParams {
    /// Default for candidate generation.
    pub const CANDIDATE_TEMPERATURE: f64 = 0.7;

    pub fn greedy(max_tokens: u32) -> Self {
        Self { temperature: 0.0, top_p: 1.0, max_tokens, seed: None }
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: Self::CANDIDATE_TEMPERATURE,
            top_p: 1.0,
            max_tokens: 512,
            seed: None,
        }
    }
}

/// One chat-completion request.
///
/// Model-facing requests carry exactly one image. Text-only requests
/// (claim extraction against a language-only endpoint) leave it empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub image: Option<ImageRef>,
    pub turns: Vec<Turn>,
    pub sampling: SamplingParams,
}

impl ChatRequest {
    pub fn with_image(image: ImageRef, turns: Vec<Turn>, sampling: SamplingParams) -> Self {
        Self { image: Some(image), turns, sampling }
    }

    pub fn text_only(turns: Vec<Turn>, sampling: SamplingParams) -> Self {
        Self { image: None, turns, sampling }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.turns.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no turns".into()));
        }
        if let Some(img) = &self.image {
            if img.0.trim().is_empty() {
                return Err(GatewayError::InvalidRequest("empty image reference".into()));
            }
        }
        self.sampling.validate()
    }

    /// Text of the final user turn.
    pub fn last_user_text(&self) -> Option<&str> {
        self.turns.iter().rev().find(|t| t.role == Role::User).map(|t| t.text.as_str())
    }

    /// Hex SHA-256 of the canonical JSON encoding of the full request,
    /// sampling parameters included.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serialises");
        hex::encode(Sha256::digest(&canonical))
    }
}

/// Endpoint settings. The credential is read from the environment variable
/// named by `api_key_env` and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpointConfig {
    pub base_url: String,
    pub model_id: String,
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    /// Upper bound on simultaneous outstanding requests.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_in_flight() -> usize {
    8
}

impl ModelEndpointConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_id: model_id.into(),
            api_key_env: String::new(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_ms(),
            max_in_flight: default_max_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.base_url.trim().is_empty() {
            return Err(GatewayError::Config("base_url is empty".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            backoff_base: Duration::from_millis(self.backoff_base_ms),
            backoff_cap: Duration::from_secs(30),
        }
    }

    /// Identifier used to partition cache keys.
    pub fn endpoint_id(&self) -> String {
        format!("{}#{}", self.base_url.trim_end_matches('/'), self.model_id)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("endpoint configuration error: {0}")]
    Config(String),
    #[error("endpoint unreachable after {attempts} attempt(s): {last_error}")]
    Unreachable { attempts: u32, last_error: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request rejected: {0}")]
    Rejected(String),
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("rejected: {0}")]
    Fatal(String),
}

impl BackendError {
    fn is_retryable(&self) -> bool {
        matches!(self, BackendError::RateLimited(_) | BackendError::Transient(_))
    }
}

/// A model that answers chat requests. Implementations must be safe to call
/// from many threads at once.
pub trait ChatBackend: Send + Sync {
    /// Stable identifier of the model behind this backend.
    fn endpoint_id(&self) -> String;

    fn send(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn endpoint_id(&self) -> String {
        (**self).endpoint_id()
    }
    fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).send(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn endpoint_id(&self) -> String {
        (**self).endpoint_id()
    }
    fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).send(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
}

impl RetryPolicy {
    pub fn no_retries() -> Self {
        Self { max_retries: 0, backoff_base: Duration::ZERO, backoff_cap: Duration::ZERO }
    }

    /// Delay before retry number `retry` (0-based): `base * 2^retry`, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX);
        self.backoff_base.saturating_mul(factor).min(self.backoff_cap.max(self.backoff_base))
    }

    /// All delays a request may wait through, in order.
    pub fn schedule(&self) -> Vec<Duration> {
        (0..self.max_retries).map(|r| self.delay(r)).collect()
    }
}

/// Record of one logical request issued through the gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRequest {
    pub request: ChatRequest,
    pub retries: u32,
    pub delays: Vec<Duration>,
    pub succeeded: bool,
}

/// Binary reading of a probe answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryAnswer {
    Yes,
    No,
    Unparseable,
}

/// Reads a yes/no answer from free text.
///
/// The first alphabetic token decides when it is `yes` or `no`
/// (case-insensitive). Otherwise the first sentence is scanned and must
/// contain exactly one of the two words as a standalone token.
pub fn parse_binary(raw: &str) -> BinaryAnswer {
    fn classify(tok: &str) -> Option<BinaryAnswer> {
        if tok.eq_ignore_ascii_case("yes") {
            Some(BinaryAnswer::Yes)
        } else if tok.eq_ignore_ascii_case("no") {
            Some(BinaryAnswer::No)
        } else {
            None
        }
    }
    let mut tokens = raw.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty());
    let Some(first) = tokens.next() else {
        return BinaryAnswer::Unparseable;
    };
    if let Some(ans) = classify(first) {
        return ans;
    }
    let sentence_end = raw.find(['.', '!', '?', '\n']).unwrap_or(raw.len());
    let (mut saw_yes, mut saw_no) = (false, false);
    for tok in raw[..sentence_end].split(|c: char| !c.is_alphabetic()) {
        match classify(tok) {
            Some(BinaryAnswer::Yes) => saw_yes = true,
            Some(BinaryAnswer::No) => saw_no = true,
            _ => {}
        }
    }
    match (saw_yes, saw_no) {
        (true, false) => BinaryAnswer::Yes,
        (false, true) => BinaryAnswer::No,
        _ => BinaryAnswer::Unparseable,
    }
}

#[derive(Debug, Default)]
struct Permits {
    in_use: Mutex<usize>,
    freed: Condvar,
}

struct PermitGuard<'a> {
    permits: &'a Permits,
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.permits.in_use.lock().expect("permit lock");
        *n -= 1;
        self.permits.freed.notify_one();
    }
}

/// Counters exposed by a gateway.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub requests: u64,
    pub attempts: u64,
    pub retries: u64,
    pub failures: u64,
    pub peak_in_flight: u64,
}

type Sleeper = dyn Fn(Duration) + Send + Sync;

/// Validating, retrying, concurrency-bounded front door to a backend.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    policy: RetryPolicy,
    max_in_flight: usize,
    binary_max_tokens: u32,
    permits: Permits,
    log: Mutex<Vec<LoggedRequest>>,
    requests: AtomicU64,
    attempts: AtomicU64,
    retries: AtomicU64,
    failures: AtomicU64,
    peak: AtomicU64,
    sleeper: Arc<Sleeper>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("endpoint", &self.backend.endpoint_id())
            .field("policy", &self.policy)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: impl ChatBackend + 'static, policy: RetryPolicy, max_in_flight: usize) -> Self {
        Self {
            backend: Box::new(backend),
            policy,
            max_in_flight: max_in_flight.max(1),
            binary_max_tokens: 32,
            permits: Permits::default(),
            log: Mutex::new(Vec::new()),
            requests: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
            retries: AtomicU64::new(0),
            failures: AtomicU64::new(0),
            peak: AtomicU64::new(0),
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    /// Gateway configured from an endpoint's retry and concurrency settings.
    pub fn for_endpoint(backend: impl ChatBackend + 'static, config: &ModelEndpointConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Self::new(backend, config.retry_policy(), config.max_in_flight))
    }

    /// Replaces the function used to wait between retries.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    pub fn endpoint_id(&self) -> String {
        self.backend.endpoint_id()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            requests: self.requests.load(Ordering::Relaxed),
            attempts: self.attempts.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            failures: self.failures.load(Ordering::Relaxed),
            peak_in_flight: self.peak.load(Ordering::Relaxed),
        }
    }

    /// Snapshot of every request issued so far.
    pub fn request_log(&self) -> Vec<LoggedRequest> {
        self.log.lock().expect("log lock").clone()
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.permits.in_use.lock().expect("permit lock");
        while *n >= self.max_in_flight {
            n = self.permits.freed.wait(n).expect("permit lock");
        }
        *n += 1;
        self.peak.fetch_max(*n as u64, Ordering::Relaxed);
        PermitGuard { permits: &self.permits }
    }

    /// Sends `request` and returns the model's full text.
    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut retries = 0u32;
        let mut delays = Vec::new();
        let outcome = loop {
            let result = {
                let _permit = self.acquire();
                self.attempts.fetch_add(1, Ordering::Relaxed);
                self.backend.send(request)
            };
            match result {
                Ok(text) => break Ok(text),
                Err(e) if e.is_retryable() && retries < self.policy.max_retries => {
                    let delay = self.policy.delay(retries);
                    log::debug!("retrying after {delay:?}: {e}");
                    delays.push(delay);
                    (self.sleeper)(delay);
                    retries += 1;
                    self.retries.fetch_add(1, Ordering::Relaxed);
                }
                Err(e) => {
                    let attempts = retries + 1;
                    break Err(match e {
                        BackendError::RateLimited(_) => GatewayError::RateLimited { attempts },
                        BackendError::Transient(msg) => GatewayError::Unreachable { attempts, last_error: msg },
                        BackendError::Malformed(msg) => GatewayError::MalformedResponse(msg),
                        BackendError::Fatal(msg) => GatewayError::Rejected(msg),
                    });
                }
            }
        };
        if outcome.is_err() {
            self.failures.fetch_add(1, Ordering::Relaxed);
        }
        self.log.lock().expect("log lock").push(LoggedRequest {
            request: request.clone(),
            retries,
            delays,
            succeeded: outcome.is_ok(),
        });
        outcome
    }

    /// Asks a yes/no question about `image` with greedy decoding and returns
    /// the raw reply.
    pub fn complete_binary(&self, image: &ImageRef, question: &str) -> Result<String, GatewayError> {
        if !question.trim_end().ends_with('?') {
            return Err(GatewayError::InvalidRequest(format!(
                "binary question must end with '?': {question:?}"
            )));
        }
        let request = ChatRequest::with_image(
            image.clone(),
            vec![Turn::user(question)],
            SamplingParams::greedy(self.binary_max_tokens),
        );
        self.complete(&request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    struct Flaky {
        failures_left: AtomicUsize,
        error: BackendError,
    }

    impl ChatBackend for Flaky {
        fn endpoint_id(&self) -> String {
            "flaky".into()
        }
        fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                return Err(self.error.clone());
            }
            Ok(format!("echo: {}", request.last_user_text().unwrap_or_default()))
        }
    }

    fn flaky(n: usize, error: BackendError) -> Flaky {
        Flaky { failures_left: AtomicUsize::new(n), error }
    }

    fn policy(max_retries: u32) -> RetryPolicy {
        RetryPolicy {
            max_retries,
            backoff_base: Duration::from_millis(10),
            backoff_cap: Duration::from_millis(50),
        }
    }

    fn no_sleep(g: Gateway) -> Gateway {
        g.with_sleeper(|_| {})
    }

    #[test]
    fn parse_binary_examples() {
        assert_eq!(parse_binary("No, there is no potted plant."), BinaryAnswer::No);
        assert_eq!(parse_binary("Yes."), BinaryAnswer::Yes);
        assert_eq!(parse_binary("The image shows a room."), BinaryAnswer::Unparseable);
        assert_eq!(parse_binary("  YES"), BinaryAnswer::Yes);
        assert_eq!(parse_binary("Answer: no. Maybe yes later"), BinaryAnswer::No);
        assert_eq!(parse_binary("I'd say yes or no"), BinaryAnswer::Unparseable);
        assert_eq!(parse_binary("Nope"), BinaryAnswer::Unparseable);
        assert_eq!(parse_binary(""), BinaryAnswer::Unparseable);
        assert_eq!(parse_binary("1234 !!"), BinaryAnswer::Unparseable);
    }

    #[test]
    fn empty_turns_rejected() {
        let g = Gateway::new(flaky(0, BackendError::Transient(String::new())), policy(0), 1);
        let req = ChatRequest::with_image(ImageRef::new("img"), vec![], SamplingParams::default());
        assert!(matches!(g.complete(&req), Err(GatewayError::InvalidRequest(_))));
        assert_eq!(g.stats().attempts, 0);
    }

    #[test]
    fn sampling_validation() {
        let mut s = SamplingParams { top_p: 0.0, ..SamplingParams::default() };
        assert!(s.validate().is_err());
        s.top_p = 1.0;
        s.temperature = -0.1;
        assert!(s.validate().is_err());
        s.temperature = 0.0;
        s.max_tokens = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn binary_question_must_end_with_question_mark() {
        let g = Gateway::new(flaky(0, BackendError::Transient(String::new())), policy(0), 1);
        let err = g.complete_binary(&ImageRef::new("img1"), "Is there a knife").unwrap_err();
        assert!(matches!(err, GatewayError::InvalidRequest(_)));
    }

    #[test]
    fn binary_probe_is_greedy() {
        let g = Gateway::new(flaky(0, BackendError::Transient(String::new())), policy(0), 1);
        g.complete_binary(&ImageRef::new("img1"), "Is there a knife in the image?").unwrap();
        let log = g.request_log();
        assert_eq!(log.len(), 1);
        assert!(log[0].request.sampling.is_greedy());
        assert_eq!(log[0].request.image, Some(ImageRef::new("img1")));
    }

    #[test]
    fn transient_failure_then_success_records_retry() {
        let g = no_sleep(Gateway::new(flaky(2, BackendError::Transient("503".into())), policy(3), 1));
        let out = g.complete_binary(&ImageRef::new("img1"), "Is there a dog in the image?").unwrap();
        assert_eq!(out, "echo: Is there a dog in the image?");
        let log = g.request_log();
        assert_eq!(log[0].retries, 2);
        assert_eq!(log[0].delays, vec![Duration::from_millis(10), Duration::from_millis(20)]);
        assert_eq!(g.stats().retries, 2);
        assert_eq!(g.stats().attempts, 3);
    }

    #[test]
    fn retries_exhausted() {
        let g = no_sleep(Gateway::new(flaky(10, BackendError::Transient("down".into())), policy(2), 1));
        let req = ChatRequest::with_image(ImageRef::new("i"), vec![Turn::user("hi")], SamplingParams::default());
        assert_eq!(
            g.complete(&req),
            Err(GatewayError::Unreachable { attempts: 3, last_error: "down".into() })
        );
        let g = no_sleep(Gateway::new(flaky(10, BackendError::RateLimited("429".into())), policy(1), 1));
        assert_eq!(g.complete(&req), Err(GatewayError::RateLimited { attempts: 2 }));
        assert_eq!(g.stats().failures, 1);
    }

    #[test]
    fn malformed_is_not_retried() {
        let g = no_sleep(Gateway::new(flaky(1, BackendError::Malformed("no choices".into())), policy(5), 1));
        let req = ChatRequest::with_image(ImageRef::new("i"), vec![Turn::user("hi")], SamplingParams::default());
        assert!(matches!(g.complete(&req), Err(GatewayError::MalformedResponse(_))));
        assert_eq!(g.stats().attempts, 1);
    }

    #[test]
    fn backoff_schedule_is_monotone_and_capped() {
        let p = RetryPolicy {
            max_retries: 40,
            backoff_base: Duration::from_millis(100),
            backoff_cap: Duration::from_secs(5),
        };
        let s = p.schedule();
        assert_eq!(s.len(), 40);
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*s.last().unwrap(), Duration::from_secs(5));
        assert!(RetryPolicy::no_retries().schedule().is_empty());
    }

    #[test]
    fn concurrency_bound_is_respected() {
        struct Slow;
        impl ChatBackend for Slow {
            fn endpoint_id(&self) -> String {
                "slow".into()
            }
            fn send(&self, _: &ChatRequest) -> Result<String, BackendError> {
                std::thread::sleep(Duration::from_millis(5));
                Ok("ok".into())
            }
        }
        let g = Gateway::new(Slow, RetryPolicy::no_retries(), 2);
        std::thread::scope(|s| {
            for i in 0..8 {
                let g = &g;
                s.spawn(move || {
                    let req = ChatRequest::with_image(
                        ImageRef::new(format!("img{i}")),
                        vec![Turn::user("hi")],
                        SamplingParams::default(),
                    );
                    g.complete(&req).unwrap();
                });
            }
        });
        let stats = g.stats();
        assert_eq!(stats.requests, 8);
        assert!(stats.peak_in_flight <= 2);
    }

    #[test]
    fn fingerprint_covers_sampling() {
        let a = ChatRequest::with_image(ImageRef::new("i"), vec![Turn::user("x")], SamplingParams::greedy(8));
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.sampling.temperature = 0.5;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.image = Some(ImageRef::new("j"));
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn endpoint_config_validation() {
        let mut c = ModelEndpointConfig::new("http://localhost:8000/v1", "llava");
        assert!(c.validate().is_ok());
        c.timeout_secs = 0.0;
        assert!(c.validate().is_err());
        c.timeout_secs = 5.0;
        c.base_url = " ".into();
        assert!(c.validate().is_err());
        let parsed: ModelEndpointConfig =
            serde_json::from_str(r#"{"base_url":"http://x/v1","model_id":"m"}"#).unwrap();
        assert_eq!(parsed.max_retries, 3);
        assert_eq!(parsed.endpoint_id(), "http://x/v1#m");
    }
}
