//! Uniform access to text-generation and embedding providers.
//!
//! A [`Gateway`] wraps one [`Provider`] with the cross-cutting behaviour every
//! caller needs: credential resolution before any call, bounded concurrency,
//! retries with exponential backoff and jitter on transient failures, and an
//! optional audit log of every request and response.
//!
//! Providers:
//! - [`MockProvider`]: deterministic offline provider used by tests and
//!   `--provider mock` runs.
//! - [`OpenAiCompatible`]: HTTP adapter for chat-completions style APIs.
//! - [`ScriptedProvider`]: replays a fixed list of responses; a test double.

mod http;
mod mock;
mod repair;

pub use http::OpenAiCompatible;
pub use mock::{bag_of_words_embedding, contains_phrase, MockProvider, MockRule, MOCK_EMBED_DIM};
pub use repair::{
    parse_ku_fragment, parse_structured_response, repair_pass, KuFragment, Parsed,
    UnparseableResponse, MAX_REPAIR_PASSES,
};
pub use scripted::{ScriptedProvider, ScriptedReply};

mod scripted;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub model_id: String,
    pub seed: Option<u64>,
}

impl GenerationRequest {
    /// Request with temperature 0 and a 2048-token output cap.
    pub fn new(
        model_id: impl Into<String>,
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
    ) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            max_output_tokens: 2048,
            temperature: 0.0,
            model_id: model_id.into(),
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn check(&self) -> Result<(), GatewayError> {
        // Also rejects NaN.
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint_uri: String,
    pub api_key_env_var_name: String,
    pub max_concurrent_requests: usize,
    pub retry_policy: RetryPolicy,
    pub timeout_ms: u64,
}

impl ProviderConfig {
    /// Defaults for a named provider; the key is read from
    /// `ALEXANDRIA_<PROVIDER>_API_KEY`.
    pub fn for_provider(provider: &str, endpoint_uri: impl Into<String>) -> Self {
        Self {
            endpoint_uri: endpoint_uri.into(),
            api_key_env_var_name: api_key_env_var(provider),
            max_concurrent_requests: 4,
            retry_policy: RetryPolicy::default(),
            timeout_ms: 120_000,
        }
    }

    /// Config for providers that never touch the network.
    pub fn offline() -> Self {
        Self {
            endpoint_uri: "mock://local".into(),
            api_key_env_var_name: String::new(),
            max_concurrent_requests: 8,
            retry_policy: RetryPolicy {
                max_retries: 0,
                base_backoff_ms: 0,
            },
            timeout_ms: 0,
        }
    }
}

pub fn api_key_env_var(provider: &str) -> String {
    let upper: String = provider
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("ALEXANDRIA_{upper}_API_KEY")
}

/// Errors a provider adapter reports for a single attempt.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("rate limited")]
    RateLimited,
    #[error("request timed out")]
    Timeout,
    #[error("server error {0}")]
    Server(u16),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("operation not supported by provider `{0}`")]
    Unsupported(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl ProviderError {
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited | ProviderError::Timeout | ProviderError::Server(_)
        )
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("missing credentials: environment variable `{env_var}` is not set")]
    AuthError { env_var: String },
    #[error("provider rejected credentials: {0}")]
    AuthRejected(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("provider returned a malformed response: {0}")]
    ProviderMalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("provider failure: {0}")]
    Provider(String),
}

/// Per-call information a provider adapter may need.
pub struct CallContext<'a> {
    pub endpoint: &'a str,
    pub api_key: Option<&'a str>,
    pub timeout: Duration,
}

/// A text-generation and embedding backend.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    /// Whether calls need an API key from the environment.
    fn requires_credentials(&self) -> bool {
        true
    }

    fn generate(
        &self,
        req: &GenerationRequest,
        call: &CallContext<'_>,
    ) -> Result<String, ProviderError>;

    fn embed(
        &self,
        text: &str,
        model_id: &str,
        call: &CallContext<'_>,
    ) -> Result<Vec<f64>, ProviderError>;

    /// Per-option continuation scores for cloze evaluation, or `None` when
    /// the provider only offers completions.
    fn score_options(
        &self,
        _req: &GenerationRequest,
        _options: &[String],
        _call: &CallContext<'_>,
    ) -> Option<Result<Vec<f64>, ProviderError>> {
        None
    }
}

/// Counting semaphore bounding in-flight provider calls.
struct Admission {
    limit: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Admission);

impl Admission {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_use.lock().expect("admission lock");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("admission lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_use.lock().expect("admission lock");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: usize,
    pub op: String,
    pub provider: String,
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum AuditSink {
    Memory(Vec<AuditEntry>),
    File(BufWriter<File>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub attempts: usize,
    pub retries: usize,
    pub successes: usize,
    pub max_in_flight: usize,
}

#[derive(Default)]
struct Counters {
    attempts: AtomicUsize,
    retries: AtomicUsize,
    successes: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

/// Shared entry point for provider calls. Safe to use from many threads.
pub struct Gateway {
    provider: Arc<dyn Provider>,
    config: ProviderConfig,
    admission: Admission,
    audit: Option<Mutex<(usize, AuditSink)>>,
    counters: Counters,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, config: ProviderConfig) -> Self {
        Self {
            admission: Admission::new(config.max_concurrent_requests),
            provider,
            config,
            audit: None,
            counters: Counters::default(),
        }
    }

    /// Gateway over the deterministic mock provider.
    pub fn mock() -> Self {
        Self::new(Arc::new(MockProvider::new()), ProviderConfig::offline())
    }

    /// Keeps audit entries in memory; see [`Gateway::audit_entries`].
    pub fn with_memory_audit(mut self) -> Self {
        self.audit = Some(Mutex::new((0, AuditSink::Memory(Vec::new()))));
        self
    }

    /// Appends audit entries as JSON lines to `path`.
    pub fn with_audit_file(mut self, path: &Path) -> std::io::Result<Self> {
        let file = File::create(path)?;
        self.audit = Some(Mutex::new((0, AuditSink::File(BufWriter::new(file)))));
        Ok(self)
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            attempts: self.counters.attempts.load(Ordering::SeqCst),
            retries: self.counters.retries.load(Ordering::SeqCst),
            successes: self.counters.successes.load(Ordering::SeqCst),
            max_in_flight: self.counters.max_in_flight.load(Ordering::SeqCst),
        }
    }

    pub fn audit_entries(&self) -> Vec<AuditEntry> {
        match &self.audit {
            Some(m) => match &m.lock().expect("audit lock").1 {
                AuditSink::Memory(v) => v.clone(),
                AuditSink::File(_) => Vec::new(),
            },
            None => Vec::new(),
        }
    }

    pub fn flush_audit(&self) -> std::io::Result<()> {
        if let Some(m) = &self.audit {
            if let AuditSink::File(w) = &mut m.lock().expect("audit lock").1 {
                w.flush()?;
            }
        }
        Ok(())
    }

    /// Fails with [`GatewayError::AuthError`] if the provider needs a key
    /// that is not set. Makes no provider call.
    pub fn check_credentials(&self) -> Result<(), GatewayError> {
        self.credentials().map(|_| ())
    }

    fn credentials(&self) -> Result<Option<String>, GatewayError> {
        if !self.provider.requires_credentials() {
            return Ok(None);
        }
        match std::env::var(&self.config.api_key_env_var_name) {
            Ok(key) if !key.trim().is_empty() => Ok(Some(key)),
            _ => Err(GatewayError::AuthError {
                env_var: self.config.api_key_env_var_name.clone(),
            }),
        }
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        req.check()?;
        let key = self.credentials()?;
        let result = self.with_retries(key.as_deref(), |call| self.provider.generate(req, call));
        self.record(
            "generate",
            &req.model_id,
            &req.system_prompt,
            &req.user_prompt,
            &result,
            key.as_deref(),
        );
        result
    }

    pub fn embed(&self, text: &str, model_id: &str) -> Result<Vec<f64>, GatewayError> {
        let key = self.credentials()?;
        let result = self.with_retries(key.as_deref(), |call| {
            self.provider.embed(text, model_id, call)
        });
        let shown = result
            .as_ref()
            .map(|v| format!("<{}-dim vector>", v.len()))
            .map_err(Clone::clone);
        self.record("embed", model_id, "", text, &shown, key.as_deref());
        result
    }

    /// Cloze scores for `options`, or `Ok(None)` if the provider cannot
    /// score continuations.
    pub fn score_options(
        &self,
        req: &GenerationRequest,
        options: &[String],
    ) -> Result<Option<Vec<f64>>, GatewayError> {
        req.check()?;
        let key = self.credentials()?;
        let mut unsupported = false;
        let result = self.with_retries(key.as_deref(), |call| {
            match self.provider.score_options(req, options, call) {
                Some(r) => r,
                None => {
                    unsupported = true;
                    Ok(Vec::new())
                }
            }
        });
        if unsupported {
            return Ok(None);
        }
        let shown = result
            .as_ref()
            .map(|v| format!("{v:?}"))
            .map_err(Clone::clone);
        let prompt = format!(
            "{}\n--- options ---\n{}",
            req.user_prompt,
            options.join("\n")
        );
        self.record(
            "score_options",
            &req.model_id,
            &req.system_prompt,
            &prompt,
            &shown,
            key.as_deref(),
        );
        result.map(Some)
    }

    fn with_retries<T>(
        &self,
        api_key: Option<&str>,
        mut attempt_fn: impl FnMut(&CallContext<'_>) -> Result<T, ProviderError>,
    ) -> Result<T, GatewayError> {
        let policy = self.config.retry_policy;
        let call = CallContext {
            endpoint: &self.config.endpoint_uri,
            api_key,
            timeout: Duration::from_millis(self.config.timeout_ms),
        };
        let mut attempt: u32 = 0;
        loop {
            let outcome = {
                let _permit = self.admission.acquire();
                let now = self.counters.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                self.counters.max_in_flight.fetch_max(now, Ordering::SeqCst);
                self.counters.attempts.fetch_add(1, Ordering::SeqCst);
                let r = attempt_fn(&call);
                self.counters.in_flight.fetch_sub(1, Ordering::SeqCst);
                r
            };
            match outcome {
                Ok(v) => {
                    self.counters.successes.fetch_add(1, Ordering::SeqCst);
                    return Ok(v);
                }
                Err(e) if e.is_transient() && attempt < policy.max_retries => {
                    self.counters.retries.fetch_add(1, Ordering::SeqCst);
                    std::thread::sleep(backoff(policy, attempt));
                    attempt += 1;
                }
                Err(e) => return Err(to_gateway_error(e, attempt + 1)),
            }
        }
    }

    fn record(
        &self,
        op: &str,
        model_id: &str,
        system: &str,
        user: &str,
        result: &Result<String, GatewayError>,
        api_key: Option<&str>,
    ) {
        let Some(m) = &self.audit else { return };
        let redact = |s: &str| match api_key {
            Some(k) if !k.is_empty() => s.replace(k, "[REDACTED]"),
            _ => s.to_string(),
        };
        let mut guard = m.lock().expect("audit lock");
        let seq = guard.0;
        guard.0 += 1;
        let entry = AuditEntry {
            seq,
            op: op.to_string(),
            provider: self.provider.name().to_string(),
            model_id: model_id.to_string(),
            system_prompt: redact(system),
            user_prompt: redact(user),
            response: result.as_ref().ok().map(|s| redact(s)),
            error: result.as_ref().err().map(|e| redact(&e.to_string())),
        };
        match &mut guard.1 {
            AuditSink::Memory(v) => v.push(entry),
            AuditSink::File(w) => {
                let line = serde_json::to_string(&entry).expect("audit entry serializes");
                // Audit is best effort; a failed write must not fail the call.
                let _ = writeln!(w, "{line}");
            }
        }
    }
}

fn backoff(policy: RetryPolicy, attempt: u32) -> Duration {
    let base = policy.base_backoff_ms;
    let exp = base.saturating_mul(1u64 << attempt.min(16));
    let jitter = if base > 0 {
        rand::thread_rng().gen_range(0..base)
    } else {
        0
    };
    Duration::from_millis(exp + jitter)
}

fn to_gateway_error(e: ProviderError, attempts: u32) -> GatewayError {
    match e {
        ProviderError::RateLimited => GatewayError::RateLimited { attempts },
        ProviderError::Timeout => GatewayError::Timeout { attempts },
        ProviderError::Server(code) => {
            GatewayError::Provider(format!("server error {code} after {attempts} attempts"))
        }
        ProviderError::Auth(m) => GatewayError::AuthRejected(m),
        ProviderError::Malformed(m) => GatewayError::ProviderMalformedResponse(m),
        ProviderError::Unsupported(m) => GatewayError::Unsupported(m),
        ProviderError::Transport(m) => GatewayError::Provider(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_var_naming() {
        assert_eq!(api_key_env_var("gemini"), "ALEXANDRIA_GEMINI_API_KEY");
        assert_eq!(
            api_key_env_var("open-router"),
            "ALEXANDRIA_OPEN_ROUTER_API_KEY"
        );
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let gw = Gateway::mock();
        let mut req = GenerationRequest::new("m", "s", "u");
        req.temperature = -1.0;
        assert!(matches!(
            gw.generate(&req),
            Err(GatewayError::InvalidRequest(_))
        ));
        req.temperature = 0.0;
        req.max_output_tokens = 0;
        assert!(matches!(
            gw.generate(&req),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    #[test]
    fn backoff_grows_exponentially() {
        let p = RetryPolicy {
            max_retries: 3,
            base_backoff_ms: 10,
        };
        for attempt in 0..4 {
            let d = backoff(p, attempt).as_millis() as u64;
            let floor = 10 << attempt;
            assert!(d >= floor && d < floor + 10, "attempt {attempt}: {d}");
        }
    }
}
