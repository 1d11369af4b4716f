//! Test double that replays a fixed script of replies.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use super::{CallContext, GenerationRequest, Provider, ProviderError};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedReply {
    Text(String),
    Vector(Vec<f64>),
    Scores(Vec<f64>),
    Fail(ProviderError),
}

/// Pops one reply per call. When the script runs out it repeats the
/// fallback reply, if any, and otherwise fails with a transport error.
pub struct ScriptedProvider {
    name: String,
    script: Mutex<VecDeque<ScriptedReply>>,
    fallback: Option<ScriptedReply>,
    latency: Duration,
    credentials: bool,
    cloze: bool,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new(script: impl IntoIterator<Item = ScriptedReply>) -> Self {
        Self {
            name: "scripted".into(),
            script: Mutex::new(script.into_iter().collect()),
            fallback: None,
            latency: Duration::ZERO,
            credentials: false,
            cloze: false,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_fallback(mut self, reply: ScriptedReply) -> Self {
        self.fallback = Some(reply);
        self
    }

    /// Sleeps this long inside every call, so concurrency is observable.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn requiring_credentials(mut self) -> Self {
        self.credentials = true;
        self
    }

    /// Answers `score_options` from the script instead of declining.
    pub fn with_cloze(mut self) -> Self {
        self.cloze = true;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    /// User prompts seen so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log").clone()
    }

    fn next(&self, prompt: &str) -> ScriptedReply {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        self.prompts
            .lock()
            .expect("prompt log")
            .push(prompt.to_string());
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let reply = self.script.lock().expect("script").pop_front();
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        reply.or_else(|| self.fallback.clone()).unwrap_or_else(|| {
            ScriptedReply::Fail(ProviderError::Transport("script exhausted".into()))
        })
    }
}

fn mismatch(reply: &ScriptedReply) -> ProviderError {
    ProviderError::Malformed(format!("scripted reply has the wrong kind: {reply:?}"))
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn requires_credentials(&self) -> bool {
        self.credentials
    }

    fn generate(
        &self,
        req: &GenerationRequest,
        _call: &CallContext<'_>,
    ) -> Result<String, ProviderError> {
        match self.next(&req.user_prompt) {
            ScriptedReply::Text(t) => Ok(t),
            ScriptedReply::Fail(e) => Err(e),
            other => Err(mismatch(&other)),
        }
    }

    fn embed(
        &self,
        text: &str,
        _model_id: &str,
        _call: &CallContext<'_>,
    ) -> Result<Vec<f64>, ProviderError> {
        match self.next(text) {
            ScriptedReply::Vector(v) => Ok(v),
            ScriptedReply::Fail(e) => Err(e),
            other => Err(mismatch(&other)),
        }
    }

    fn score_options(
        &self,
        req: &GenerationRequest,
        _options: &[String],
        _call: &CallContext<'_>,
    ) -> Option<Result<Vec<f64>, ProviderError>> {
        if !self.cloze {
            return None;
        }
        Some(match self.next(&req.user_prompt) {
            ScriptedReply::Scores(s) => Ok(s),
            ScriptedReply::Fail(e) => Err(e),
            other => Err(mismatch(&other)),
        })
    }
}
