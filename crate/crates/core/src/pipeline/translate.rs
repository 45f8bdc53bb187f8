use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{Language, UserStory};

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("translator request failed: {0}")]
    Request(String),
    #[error("translator returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no translation recorded for {0:?}")]
    Missing(String),
    #[error("translator fixture: {0}")]
    Fixture(String),
}

/// Translates texts into English.
#[async_trait]
pub trait Translator: Send + Sync {
    async fn translate(&self, texts: &[String], source: &Language) -> Result<Vec<String>, TranslateError>;
}

/// Client for a DeepL-style `POST /v2/translate` endpoint.
#[derive(Debug, Clone)]
pub struct HttpTranslator {
    client: reqwest::Client,
    endpoint: String,
    auth_key: Option<String>,
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a [String],
    source_lang: String,
    target_lang: &'static str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    translations: Vec<Translation>,
}

#[derive(Deserialize)]
struct Translation {
    text: String,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>, auth_key: Option<String>, timeout: Duration) -> Result<Self, TranslateError> {
        Ok(HttpTranslator {
            client: reqwest::Client::builder()
                .timeout(timeout)
                .build()
                .map_err(|e| TranslateError::Request(e.to_string()))?,
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            auth_key,
        })
    }
}

#[async_trait]
impl Translator for HttpTranslator {
    async fn translate(&self, texts: &[String], source: &Language) -> Result<Vec<String>, TranslateError> {
        let mut req = self.client.post(format!("{}/v2/translate", self.endpoint)).json(&TranslateRequest {
            text: texts,
            source_lang: source.code().to_uppercase(),
            target_lang: "EN",
        });
        if let Some(key) = &self.auth_key {
            req = req.header("Authorization", format!("DeepL-Auth-Key {key}"));
        }
        let resp = req.send().await.map_err(|e| TranslateError::Request(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TranslateError::Status {
                status: status.as_u16(),
                body: resp.text().await.unwrap_or_default(),
            });
        }
        let body: TranslateResponse = resp.json().await.map_err(|e| TranslateError::Request(e.to_string()))?;
        if body.translations.len() != texts.len() {
            return Err(TranslateError::Request(format!(
                "{} translations for {} texts",
                body.translations.len(),
                texts.len()
            )));
        }
        Ok(body.translations.into_iter().map(|t| t.text).collect())
    }
}

/// Replays translations from a JSON object mapping source text to English.
#[derive(Debug, Clone, Default)]
pub struct FixtureTranslator {
    table: HashMap<String, String>,
}

impl FixtureTranslator {
    pub fn new(table: HashMap<String, String>) -> Self {
        FixtureTranslator { table }
    }

    pub fn from_file(path: &Path) -> Result<Self, TranslateError> {
        let raw = std::fs::read_to_string(path).map_err(|e| TranslateError::Fixture(format!("{}: {e}", path.display())))?;
        let table = serde_json::from_str(&raw).map_err(|e| TranslateError::Fixture(e.to_string()))?;
        Ok(FixtureTranslator { table })
    }
}

#[async_trait]
impl Translator for FixtureTranslator {
    async fn translate(&self, texts: &[String], _source: &Language) -> Result<Vec<String>, TranslateError> {
        texts
            .iter()
            .map(|t| self.table.get(t).cloned().ok_or_else(|| TranslateError::Missing(t.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationOutcome {
    pub story: UserStory,
    pub translated: bool,
    /// Set when a non-English story passes through untranslated.
    pub warning: Option<String>,
}

/// English stories pass unchanged. Others are translated when a translator
/// is available and passed through with a warning otherwise.
pub async fn translate(story: UserStory, translator: Option<&dyn Translator>) -> Result<TranslationOutcome, TranslateError> {
    if story.language == Language::English {
        return Ok(TranslationOutcome {
            story,
            translated: false,
            warning: None,
        });
    }
    let Some(translator) = translator else {
        let warning = format!("story {} is in language {} and no translator is configured", story.id, story.language);
        tracing::warn!("{warning}");
        return Ok(TranslationOutcome {
            story,
            translated: false,
            warning: Some(warning),
        });
    };
    let mut texts = vec![story.text.clone()];
    texts.extend(story.existing_criteria.iter().cloned());
    let mut out = translator.translate(&texts, &story.language).await?.into_iter();
    let mut story = story;
    story.text = out.next().unwrap_or_default();
    story.existing_criteria = out.collect();
    story.language = Language::English;
    story.reparse();
    Ok(TranslationOutcome {
        story,
        translated: true,
        warning: None,
    })
}
