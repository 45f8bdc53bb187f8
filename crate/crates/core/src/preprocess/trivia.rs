//! Line-level removal of greetings, thanks and opinion filler.

use std::sync::LazyLock;
use std::time::Duration;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("trivia scorer request failed: {0}")]
    Request(String),
    #[error("trivia scorer returned status {0}")]
    Status(u16),
    #[error("trivia scorer response malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerSource {
    Rules,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriviaVerdict {
    pub line: String,
    pub is_trivia: bool,
    pub score: f64,
    pub source: ScorerSource,
}

#[async_trait]
pub trait TriviaScorer: Send + Sync {
    async fn classify(&self, line: &str) -> Result<TriviaVerdict, ScorerError>;
}

const TRIVIA_OPENERS: [&str; 30] = [
    "thank you",
    "thanks",
    "thx",
    "i hope",
    "hope this helps",
    "i think",
    "in my opinion",
    "imho",
    "hi",
    "hello",
    "hey",
    "dear",
    "regards",
    "best regards",
    "kind regards",
    "cheers",
    "greetings",
    "any help",
    "please help",
    "can anyone help",
    "sorry",
    "let me know",
    "looking forward",
    "i would appreciate",
    "great work",
    "good job",
    r"\+1",
    "same here",
    "me too",
    "any update",
];

static RULE_PATTERN: LazyLock<Regex> = LazyLock::new(|| {
    let alts: Vec<String> = TRIVIA_OPENERS
        .iter()
        .map(|p| if p.starts_with('\\') { p.to_string() } else { p.replace(' ', r"\s+") })
        .collect();
    Regex::new(&format!(r"(?i)^\s*(?:[-*>]\s*)?(?:{})(?:\b|$|[\s,.!:])", alts.join("|"))).unwrap()
});

/// Deterministic baseline: a line is trivia when it opens with a known
/// courtesy or opinion phrase.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleTrivia;

impl RuleTrivia {
    pub fn is_trivia(line: &str) -> bool {
        RULE_PATTERN.is_match(line)
    }
}

#[async_trait]
impl TriviaScorer for RuleTrivia {
    async fn classify(&self, line: &str) -> Result<TriviaVerdict, ScorerError> {
        let is_trivia = Self::is_trivia(line);
        Ok(TriviaVerdict {
            line: line.to_string(),
            is_trivia,
            score: if is_trivia { 1.0 } else { 0.0 },
            source: ScorerSource::Rules,
        })
    }
}

/// Classifier behind an HTTP endpoint: `POST {endpoint}/score` with
/// `{"text": ...}` answering `{"score": f}`.
#[derive(Debug, Clone)]
pub struct RemoteTriviaScorer {
    client: reqwest::Client,
    endpoint: String,
    threshold: f64,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

impl RemoteTriviaScorer {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    pub fn new(endpoint: impl Into<String>, threshold: f64, timeout: Duration) -> Result<Self, ScorerError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ScorerError::Request(e.to_string()))?;
        Ok(RemoteTriviaScorer {
            client,
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            threshold,
        })
    }
}

#[async_trait]
impl TriviaScorer for RemoteTriviaScorer {
    async fn classify(&self, line: &str) -> Result<TriviaVerdict, ScorerError> {
        let resp = self
            .client
            .post(format!("{}/score", self.endpoint))
            .json(&ScoreRequest { text: line })
            .send()
            .await
            .map_err(|e| ScorerError::Request(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ScorerError::Status(resp.status().as_u16()));
        }
        let body: ScoreResponse = resp
            .json()
            .await
            .map_err(|e| ScorerError::Malformed(e.to_string()))?;
        if !body.score.is_finite() {
            return Err(ScorerError::Malformed(format!("score {}", body.score)));
        }
        Ok(TriviaVerdict {
            line: line.to_string(),
            is_trivia: body.score >= self.threshold,
            score: body.score,
            source: ScorerSource::Remote,
        })
    }
}

/// Keeps the non-trivia lines of `text`; returns them with the removed count.
pub async fn filter_trivia(text: &str, scorer: &dyn TriviaScorer) -> Result<(String, usize), ScorerError> {
    let mut kept = Vec::new();
    let mut removed = 0;
    for line in text.lines() {
        if scorer.classify(line).await?.is_trivia {
            removed += 1;
        } else {
            kept.push(line);
        }
    }
    Ok((kept.join("\n"), removed))
}
