use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::rfc3339;
use crate::gherkin::{self, GherkinScenario};
use crate::llm::RelevanceLabel;
use crate::store::{Entity, Record};

use super::PipelineError;

/// Separator between existing acceptance criteria in the CSV layout.
pub const CRITERIA_SEPARATOR: char = '‖';

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Language {
    English,
    German,
    Other(String),
}

impl Language {
    pub fn code(&self) -> &str {
        match self {
            Language::English => "en",
            Language::German => "de",
            Language::Other(c) => c,
        }
    }

    /// Accepts ISO codes and English names; empty means English.
    pub fn parse(s: &str) -> Language {
        match s.trim().to_lowercase().as_str() {
            "" | "en" | "english" => Language::English,
            "de" | "german" | "deutsch" => Language::German,
            other => Language::Other(other.to_string()),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for Language {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Language {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Language::parse(&String::deserialize(d)?))
    }
}

static CONNEXTRA: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?is)^\s*as\s+an?\s+(.+?)\s*,?\s+i\s+(?:want|would\s+like|need|can)(?:\s+to)?\s+(.+?)(?:\s*,?\s+so\s+that\s+(.+?))?\s*[.!]?\s*$",
    )
    .unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserStory {
    pub id: String,
    pub project: String,
    pub text: String,
    pub role: Option<String>,
    pub action: Option<String>,
    pub benefit: Option<String>,
    pub existing_criteria: Vec<String>,
    pub language: Language,
}

impl UserStory {
    pub fn new(
        id: impl Into<String>,
        project: impl Into<String>,
        text: impl Into<String>,
        existing_criteria: Vec<String>,
        language: Language,
    ) -> Result<UserStory, PipelineError> {
        let id = id.into();
        let text = text.into();
        if id.trim().is_empty() {
            return Err(PipelineError::Validation("story id is empty".into()));
        }
        if text.trim().is_empty() {
            return Err(PipelineError::Validation(format!("story {id} has empty text")));
        }
        let mut story = UserStory {
            id,
            project: project.into(),
            text,
            role: None,
            action: None,
            benefit: None,
            existing_criteria: existing_criteria
                .into_iter()
                .map(|c| c.trim().to_string())
                .filter(|c| !c.is_empty())
                .collect(),
            language,
        };
        story.reparse();
        Ok(story)
    }

    /// Re-derives role, action and benefit from the text.
    pub fn reparse(&mut self) {
        let caps = CONNEXTRA.captures(&self.text);
        let get = |i: usize| caps.as_ref().and_then(|c| c.get(i)).map(|m| m.as_str().to_string());
        self.role = get(1);
        self.action = get(2);
        self.benefit = get(3);
    }

    /// Existing criteria as prompt text; the literal `none` when there are none.
    pub fn criteria_text(&self) -> String {
        if self.existing_criteria.is_empty() {
            "none".to_string()
        } else {
            self.existing_criteria
                .iter()
                .map(|c| format!("- {c}"))
                .collect::<Vec<_>>()
                .join("\n")
        }
    }
}

impl Record for UserStory {
    const ENTITY: Entity = Entity::UserStories;
    const CSV_COLUMNS: &'static [&'static str] = &["id", "project", "text", "acceptance_criteria", "language"];

    fn key(&self) -> String {
        self.id.clone()
    }

    fn csv_row(&self) -> Vec<String> {
        vec![
            self.id.clone(),
            self.project.clone(),
            self.text.clone(),
            self.existing_criteria.join(&CRITERIA_SEPARATOR.to_string()),
            self.language.code().to_string(),
        ]
    }
}

/// Decision of a `k`-member ensemble: a match iff at least `⌈k/2⌉` members
/// vote yes, so an even split counts as a match.
pub fn majority_vote(votes: &[u8]) -> Result<u8, PipelineError> {
    if votes.is_empty() {
        return Err(PipelineError::Validation("majority vote over no votes".into()));
    }
    if let Some(v) = votes.iter().find(|v| **v > 1) {
        return Err(PipelineError::Validation(format!("vote {v} is not binary")));
    }
    let yes: usize = votes.iter().map(|v| *v as usize).sum();
    Ok(u8::from(yes >= votes.len().div_ceil(2)))
}

pub fn pair_key(story_id: &str, issue_id: &str) -> String {
    format!("{story_id}|{issue_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub story_id: String,
    pub issue_id: String,
    /// Backend name → vote.
    pub votes: BTreeMap<String, u8>,
    /// Backend name → final raw reply.
    pub replies: BTreeMap<String, String>,
    pub decision: u8,
    pub k: usize,
}

impl MatchRecord {
    pub fn new(
        story_id: &str,
        issue_id: &str,
        votes: BTreeMap<String, u8>,
        replies: BTreeMap<String, String>,
    ) -> Result<Self, PipelineError> {
        let v: Vec<u8> = votes.values().copied().collect();
        let decision = majority_vote(&v)?;
        Ok(MatchRecord {
            story_id: story_id.into(),
            issue_id: issue_id.into(),
            k: votes.len(),
            votes,
            replies,
            decision,
        })
    }

    /// True when the stored decision agrees with the stored votes.
    pub fn is_consistent(&self) -> bool {
        let v: Vec<u8> = self.votes.values().copied().collect();
        self.k == v.len() && majority_vote(&v).ok() == Some(self.decision)
    }
}

impl Record for MatchRecord {
    const ENTITY: Entity = Entity::MatchRecords;
    const CSV_COLUMNS: &'static [&'static str] = &["story_id", "issue_id", "votes", "decision", "k"];

    fn key(&self) -> String {
        pair_key(&self.story_id, &self.issue_id)
    }

    fn references(&self) -> Vec<(&'static str, Entity, String)> {
        vec![
            ("match_story", Entity::UserStories, self.story_id.clone()),
            ("match_issue", Entity::PreprocessedIssues, self.issue_id.clone()),
        ]
    }
}

/// Stable criterion id: 16 hex chars of SHA-256 over story and issue ids.
pub fn criterion_id(story_id: &str, issue_id: &str) -> String {
    let mut h = Sha256::new();
    h.update(story_id.as_bytes());
    h.update([0u8]);
    h.update(issue_id.as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedCriterion {
    pub id: String,
    pub story_id: String,
    pub issue_id: String,
    pub backend: String,
    pub raw_text: String,
    pub scenario: Option<GherkinScenario>,
    pub malformed: bool,
    pub parse_error: Option<String>,
    #[serde(with = "rfc3339")]
    pub created_at: DateTime<Utc>,
}

impl GeneratedCriterion {
    /// Builds the criterion from a reply; an unparseable reply is kept as malformed.
    pub fn from_reply(story_id: &str, issue_id: &str, backend: &str, raw: &str, created_at: DateTime<Utc>) -> Self {
        let (scenario, parse_error) = match gherkin::parse(raw) {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        GeneratedCriterion {
            id: criterion_id(story_id, issue_id),
            story_id: story_id.into(),
            issue_id: issue_id.into(),
            backend: backend.into(),
            raw_text: raw.into(),
            malformed: scenario.is_none(),
            scenario,
            parse_error,
            created_at,
        }
    }

    pub fn gherkin(&self) -> Option<String> {
        self.scenario.as_ref().map(gherkin::serialize)
    }
}

impl Record for GeneratedCriterion {
    const ENTITY: Entity = Entity::Criteria;
    const CSV_COLUMNS: &'static [&'static str] = &[
        "id", "story_id", "issue_id", "backend", "malformed", "gherkin", "raw_text", "created_at",
    ];

    fn key(&self) -> String {
        self.id.clone()
    }

    fn references(&self) -> Vec<(&'static str, Entity, String)> {
        vec![
            ("criterion_story", Entity::UserStories, self.story_id.clone()),
            ("criterion_issue", Entity::PreprocessedIssues, self.issue_id.clone()),
            (
                "criterion_match",
                Entity::MatchRecords,
                pair_key(&self.story_id, &self.issue_id),
            ),
        ]
    }

    fn csv_row(&self) -> Vec<String> {
        vec![
            self.id.clone(),
            self.story_id.clone(),
            self.issue_id.clone(),
            self.backend.clone(),
            self.malformed.to_string(),
            self.gherkin().unwrap_or_default(),
            self.raw_text.clone(),
            self.created_at.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceAssessment {
    pub criterion_id: String,
    pub label: RelevanceLabel,
    pub explanation: String,
    pub assessor_backend: String,
    /// False when the label was defaulted after unparseable replies.
    pub parsed: bool,
    pub raw_reply: String,
}

impl Record for RelevanceAssessment {
    const ENTITY: Entity = Entity::Assessments;
    const CSV_COLUMNS: &'static [&'static str] =
        &["criterion_id", "label", "explanation", "assessor_backend", "parsed"];

    fn key(&self) -> String {
        self.criterion_id.clone()
    }

    fn references(&self) -> Vec<(&'static str, Entity, String)> {
        vec![("assessment_criterion", Entity::Criteria, self.criterion_id.clone())]
    }
}

fn default_cap() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub seed: u64,
    #[serde(default)]
    pub story_count: Option<usize>,
    #[serde(default)]
    pub issue_count: Option<usize>,
    #[serde(default = "default_cap")]
    pub criteria_per_story_cap: usize,
}

impl SampleSpec {
    pub fn new(seed: u64) -> Self {
        SampleSpec {
            seed,
            story_count: None,
            issue_count: None,
            criteria_per_story_cap: default_cap(),
        }
    }
}
