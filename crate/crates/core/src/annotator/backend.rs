use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::http::HttpBackend;
use super::mock::MockBackend;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend {backend} cannot {capability}")]
    Capability { backend: String, capability: &'static str },
    #[error("backend configuration: {0}")]
    Config(String),
}

/// A text-completion model. Implementations must be total: every call either
/// returns text or a [`BackendError`].
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, prompt: &str, max_output_tokens: usize) -> Result<String, BackendError>;

    /// Mean per-token log-likelihood of `answer` given the query and one
    /// passage. Only backends that expose token scoring implement this.
    fn answer_log_likelihood(&self, query: &str, passage: &str, answer: &str) -> Result<f64, BackendError> {
        let _ = (query, passage, answer);
        Err(BackendError::Capability {
            backend: self.name().to_string(),
            capability: "score answer likelihoods",
        })
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, prompt: &str, max_output_tokens: usize) -> Result<String, BackendError> {
        (**self).complete(prompt, max_output_tokens)
    }

    fn answer_log_likelihood(&self, query: &str, passage: &str, answer: &str) -> Result<f64, BackendError> {
        (**self).answer_log_likelihood(query, passage, answer)
    }
}

/// Settings for building a backend from its name.
#[derive(Debug, Clone, Default)]
pub struct BackendSettings {
    /// Completion endpoint for `http:<model>` backends.
    pub api_url: Option<String>,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub timeout: Option<Duration>,
}

/// Resolves `mock:<policy>:<seed>` or `http:<model>`.
pub fn backend_from_name(name: &str, settings: &BackendSettings) -> Result<Arc<dyn LlmBackend>, BackendError> {
    if name.starts_with("mock:") {
        return Ok(Arc::new(MockBackend::from_name(name)?));
    }
    if let Some(model) = name.strip_prefix("http:") {
        let url = settings
            .api_url
            .clone()
            .ok_or_else(|| BackendError::Config("http backend needs ANNOTATOR_API_URL".into()))?;
        return Ok(Arc::new(HttpBackend::new(
            url,
            settings.api_key.clone(),
            model,
            settings.temperature,
            settings.timeout.unwrap_or(Duration::from_secs(120)),
        )));
    }
    Err(BackendError::Config(format!(
        "unknown backend {name:?}; expected mock:<policy>:<seed> or http:<model>"
    )))
}

/// Replays canned replies in order and records the prompts it receives.
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<String, BackendError>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(replies: impl IntoIterator<Item = Result<String, BackendError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| Ok(t.into())))
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log poisoned").clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("reply queue poisoned").len()
    }
}

impl LlmBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &str, _max_output_tokens: usize) -> Result<String, BackendError> {
        self.prompts.lock().expect("prompt log poisoned").push(prompt.to_string());
        self.replies
            .lock()
            .expect("reply queue poisoned")
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::Transport("script exhausted".into())))
    }
}

/// Spaces calls to an inner backend at least `min_interval` apart.
pub struct RateLimited<B> {
    inner: B,
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl<B: LlmBackend> RateLimited<B> {
    pub fn new(inner: B, calls_per_second: f64) -> Self {
        let min_interval = if calls_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / calls_per_second)
        } else {
            Duration::ZERO
        };
        Self {
            inner,
            min_interval,
            last: Mutex::new(None),
        }
    }

    fn wait_turn(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let mut last = self.last.lock().expect("rate limiter poisoned");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

impl<B: LlmBackend> LlmBackend for RateLimited<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, prompt: &str, max_output_tokens: usize) -> Result<String, BackendError> {
        self.wait_turn();
        self.inner.complete(prompt, max_output_tokens)
    }

    fn answer_log_likelihood(&self, query: &str, passage: &str, answer: &str) -> Result<f64, BackendError> {
        self.wait_turn();
        self.inner.answer_log_likelihood(query, passage, answer)
    }
}
