use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::prompt::{Placeholder, PromptInstance, PromptKind};
use super::BackendConfig;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed chat response: {0}")]
    Malformed(String),
    #[error("no fixture recorded for key {key}")]
    FixtureMissing { key: String },
    #[error("fixture i/o on {path}: {message}")]
    FixtureIo { path: PathBuf, message: String },
}

impl TransportError {
    pub fn is_retriable(&self) -> bool {
        match self {
            TransportError::Network(_) => true,
            TransportError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Delivers one rendered prompt to a chat backend and returns the raw reply.
#[async_trait]
pub trait ChatTransport: Send + Sync {
    async fn chat(&self, backend: &BackendConfig, prompt: &PromptInstance) -> Result<String, TransportError>;
}

#[derive(Debug, Serialize)]
pub struct ChatMessage<'a> {
    pub role: &'a str,
    pub content: &'a str,
}

#[derive(Debug, Serialize)]
pub struct ChatOptions {
    pub temperature: f64,
}

#[derive(Debug, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: Vec<ChatMessage<'a>>,
    pub options: ChatOptions,
    pub stream: bool,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    message: ChatResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ChatResponseMessage {
    content: String,
}

/// Speaks the `/api/chat` protocol of local model servers.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

#[async_trait]
impl ChatTransport for HttpTransport {
    async fn chat(&self, backend: &BackendConfig, prompt: &PromptInstance) -> Result<String, TransportError> {
        let body = ChatRequest {
            model: backend.model(),
            messages: vec![ChatMessage {
                role: "user",
                content: &prompt.rendered,
            }],
            options: ChatOptions {
                temperature: backend.temperature,
            },
            stream: false,
        };
        let url = format!("{}/api/chat", backend.endpoint.trim_end_matches('/'));
        let resp = self
            .client
            .post(url)
            .json(&body)
            .send()
            .await
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))?;
        Ok(parsed.message.content)
    }
}

/// One row of a mock rule table. All present conditions must hold; the
/// comparisons are case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub kind: Option<PromptKind>,
    /// Placeholder inspected; the whole rendered prompt when absent.
    #[serde(default)]
    pub field: Option<Placeholder>,
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub equals: Option<String>,
    pub reply: String,
}

impl MockRule {
    pub fn reply(reply: impl Into<String>) -> Self {
        MockRule {
            kind: None,
            field: None,
            contains: None,
            equals: None,
            reply: reply.into(),
        }
    }

    pub fn for_kind(mut self, kind: PromptKind) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn when_contains(mut self, field: Placeholder, needle: impl Into<String>) -> Self {
        self.field = Some(field);
        self.contains = Some(needle.into());
        self
    }

    /// Condition on the whole rendered prompt, re-ask suffixes included.
    pub fn when_contains_prompt(mut self, needle: impl Into<String>) -> Self {
        self.field = None;
        self.contains = Some(needle.into());
        self
    }

    pub fn when_equals(mut self, field: Placeholder, value: impl Into<String>) -> Self {
        self.field = Some(field);
        self.equals = Some(value.into());
        self
    }

    fn matches(&self, prompt: &PromptInstance) -> bool {
        if self.kind.is_some_and(|k| k != prompt.kind) {
            return false;
        }
        let subject = match self.field {
            Some(p) => prompt.get(p).unwrap_or(""),
            None => prompt.rendered.as_str(),
        };
        let subject = subject.to_lowercase();
        self.contains
            .as_ref()
            .is_none_or(|n| subject.contains(&n.to_lowercase()))
            && self
                .equals
                .as_ref()
                .is_none_or(|v| subject.trim() == v.trim().to_lowercase())
    }
}

/// Deterministic backend: the first matching rule answers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockTransport {
    pub rules: Vec<MockRule>,
    pub default_reply: String,
}

impl MockTransport {
    pub fn new(rules: Vec<MockRule>, default_reply: impl Into<String>) -> Self {
        MockTransport {
            rules,
            default_reply: default_reply.into(),
        }
    }

    pub fn answer(&self, prompt: &PromptInstance) -> &str {
        self.rules
            .iter()
            .find(|r| r.matches(prompt))
            .map_or(self.default_reply.as_str(), |r| r.reply.as_str())
    }
}

#[async_trait]
impl ChatTransport for MockTransport {
    async fn chat(&self, _backend: &BackendConfig, prompt: &PromptInstance) -> Result<String, TransportError> {
        Ok(self.answer(prompt).to_string())
    }
}

/// A recorded exchange, stored as `<key>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub backend: String,
    pub prompt: String,
    pub reply: String,
}

/// Hex SHA-256 over backend name and rendered prompt.
pub fn fixture_key(backend: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(backend.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

fn fixture_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.json"))
}

pub fn write_fixture(dir: &Path, entry: &FixtureEntry) -> Result<PathBuf, TransportError> {
    let key = fixture_key(&entry.backend, &entry.prompt);
    let path = fixture_path(dir, &key);
    let io_err = |e: std::io::Error| TransportError::FixtureIo {
        path: path.clone(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let json = serde_json::to_string_pretty(entry).expect("fixture serializes");
    std::fs::write(&path, json + "\n").map_err(io_err)?;
    Ok(path)
}

/// Replays recorded replies byte for byte.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureTransport { dir: dir.into() }
    }
}

#[async_trait]
impl ChatTransport for FixtureTransport {
    async fn chat(&self, backend: &BackendConfig, prompt: &PromptInstance) -> Result<String, TransportError> {
        let key = fixture_key(&backend.name, &prompt.rendered);
        let path = fixture_path(&self.dir, &key);
        let raw = match std::fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(TransportError::FixtureMissing { key })
            }
            Err(e) => {
                return Err(TransportError::FixtureIo {
                    path,
                    message: e.to_string(),
                })
            }
        };
        let entry: FixtureEntry = serde_json::from_str(&raw).map_err(|e| TransportError::FixtureIo {
            path,
            message: e.to_string(),
        })?;
        Ok(entry.reply)
    }
}

/// Passes calls through and records every successful exchange as a fixture.
pub struct RecordingTransport {
    inner: Arc<dyn ChatTransport>,
    dir: PathBuf,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn ChatTransport>, dir: impl Into<PathBuf>) -> Self {
        RecordingTransport { inner, dir: dir.into() }
    }
}

#[async_trait]
impl ChatTransport for RecordingTransport {
    async fn chat(&self, backend: &BackendConfig, prompt: &PromptInstance) -> Result<String, TransportError> {
        let reply = self.inner.chat(backend, prompt).await?;
        write_fixture(
            &self.dir,
            &FixtureEntry {
                backend: backend.name.clone(),
                prompt: prompt.rendered.clone(),
                reply: reply.clone(),
            },
        )?;
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::prompt::render_prompt;

    fn match_prompt(issue: &str) -> PromptInstance {
        render_prompt(
            PromptKind::Match,
            [
                (Placeholder::DomainDescription, "shop".to_string()),
                (Placeholder::UserStory, "As a customer I want discounts".to_string()),
                (Placeholder::Issue, issue.to_string()),
            ]
            .into(),
        )
        .unwrap()
    }

    #[test]
    fn mock_rules_first_match_wins() {
        let mock = MockTransport::new(
            vec![
                MockRule::reply("yes").when_contains(Placeholder::Issue, "coupon"),
                MockRule::reply("maybe").for_kind(PromptKind::Generate),
            ],
            "no",
        );
        assert_eq!(mock.answer(&match_prompt("The COUPON is ignored")), "yes");
        assert_eq!(mock.answer(&match_prompt("Slow search")), "no");
    }

    #[test]
    fn mock_equals_rule() {
        let rule = MockRule::reply("relevant").when_equals(Placeholder::Issue, "exact");
        assert!(rule.matches(&match_prompt(" Exact ")));
        assert!(!rule.matches(&match_prompt("exactly")));
    }

    #[tokio::test]
    async fn fixture_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let backend = BackendConfig::new("m", "http://unused");
        let prompt = match_prompt("coupon");
        let fixture = FixtureTransport::new(dir.path());
        assert!(matches!(
            fixture.chat(&backend, &prompt).await,
            Err(TransportError::FixtureMissing { .. })
        ));
        let recorder = RecordingTransport::new(
            Arc::new(MockTransport::new(vec![], " Yes.\n")),
            dir.path(),
        );
        assert_eq!(recorder.chat(&backend, &prompt).await.unwrap(), " Yes.\n");
        assert_eq!(fixture.chat(&backend, &prompt).await.unwrap(), " Yes.\n");
    }

    #[test]
    fn key_depends_on_backend_and_prompt() {
        assert_ne!(fixture_key("a", "p"), fixture_key("b", "p"));
        assert_ne!(fixture_key("a", "p"), fixture_key("a", "q"));
        assert_ne!(fixture_key("ab", "c"), fixture_key("a", "bc"));
        assert_eq!(fixture_key("a", "p").len(), 64);
    }
}
