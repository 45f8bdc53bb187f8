//! Chat-completion gateway: prompt rendering, backends with retry and an
//! in-flight budget, and reply parsing.

mod parse;
mod prompt;
pub mod stub;
mod transport;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

pub use parse::{parse_binary, parse_label, BinaryAnswer, ParsedLabel, RelevanceLabel};
pub use prompt::{render_prompt, Placeholder, Placeholders, PromptInstance, PromptKind, PromptTemplates, Template};
pub use transport::{
    fixture_key, write_fixture, ChatRequest, ChatTransport, FixtureEntry, FixtureTransport, HttpTransport, MockRule,
    MockTransport, RecordingTransport, TransportError,
};

/// Environment variable that turns live backends into recorders.
pub const RECORD_ENV: &str = "CRUISE_LLM_RECORD";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("{kind} prompt is missing placeholder {placeholder}")]
    MissingPlaceholder { kind: PromptKind, placeholder: Placeholder },
    #[error("invalid template: {0}")]
    Template(String),
    #[error("backend {backend} unavailable after {attempts} attempts: {last}")]
    Unavailable {
        backend: String,
        attempts: u32,
        last: TransportError,
    },
    #[error("backend {backend} failed: {source}")]
    Failed {
        backend: String,
        #[source]
        source: TransportError,
    },
    #[error("invalid backend config {backend}: {reason}")]
    Config { backend: String, reason: String },
}

fn default_temperature() -> f64 {
    0.0
}
fn default_inflight() -> usize {
    1
}
fn default_timeout() -> u64 {
    120
}
fn default_retry_limit() -> u32 {
    2
}
fn default_backoff() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    #[serde(default)]
    pub endpoint: String,
    /// Model tag sent on the wire; defaults to `name`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

impl BackendConfig {
    pub fn new(name: impl Into<String>, endpoint: impl Into<String>) -> Self {
        BackendConfig {
            name: name.into(),
            endpoint: endpoint.into(),
            model: None,
            temperature: default_temperature(),
            max_inflight: default_inflight(),
            timeout_s: default_timeout(),
            retry_limit: default_retry_limit(),
            retry_backoff_ms: default_backoff(),
        }
    }

    pub fn model(&self) -> &str {
        self.model.as_deref().unwrap_or(&self.name)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |reason: &str| {
            Err(LlmError::Config {
                backend: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.name.trim().is_empty() {
            return bad("empty name");
        }
        if self.max_inflight == 0 {
            return bad("max_inflight must be at least 1");
        }
        if self.timeout_s == 0 {
            return bad("timeout_s must be positive");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be a non-negative number");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendReply {
    pub backend: String,
    pub raw: String,
    pub latency_ms: u64,
    pub attempt: u32,
}

/// A configured backend with its transport, in-flight budget and call counter.
pub struct Backend {
    config: BackendConfig,
    transport: Arc<dyn ChatTransport>,
    inflight: Semaphore,
    calls: AtomicU64,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("config", &self.config)
            .field("calls", &self.calls())
            .finish()
    }
}

impl Backend {
    pub fn new(config: BackendConfig, transport: Arc<dyn ChatTransport>) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(Backend {
            inflight: Semaphore::new(config.max_inflight),
            config,
            transport,
            calls: AtomicU64::new(0),
        })
    }

    pub fn mock(name: impl Into<String>, mock: MockTransport) -> Self {
        let mut config = BackendConfig::new(name, "mock://");
        config.max_inflight = 64;
        Backend::new(config, Arc::new(mock)).expect("mock config is valid")
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Transport calls issued so far, retries included.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// One completion, retried on transport failures up to `retry_limit`.
    pub async fn complete(&self, prompt: &PromptInstance) -> Result<BackendReply, LlmError> {
        let _permit = self.inflight.acquire().await.expect("semaphore never closed");
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.calls.fetch_add(1, Ordering::SeqCst);
            let started = Instant::now();
            match self.transport.chat(&self.config, prompt).await {
                Ok(raw) => {
                    return Ok(BackendReply {
                        backend: self.config.name.clone(),
                        raw,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                    })
                }
                Err(e) if e.is_retriable() && attempt <= self.config.retry_limit => {
                    let delay = self.config.retry_backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    tracing::warn!(backend = %self.config.name, attempt, error = %e, "retrying");
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                }
                Err(e) if e.is_retriable() => {
                    return Err(LlmError::Unavailable {
                        backend: self.config.name.clone(),
                        attempts: attempt,
                        last: e,
                    })
                }
                Err(e) => {
                    return Err(LlmError::Failed {
                        backend: self.config.name.clone(),
                        source: e,
                    })
                }
            }
        }
    }
}
