//! Turns raw tracker issues into short, English, requirement-only text.

mod language;
mod markdown;
mod trivia;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use language::{DetectedLanguage, LanguageDetector, StopwordDetector};
pub use markdown::{strip_markdown, MarkdownCleaner, RemovalStats, DEFAULT_DROP_SECTIONS};
pub use trivia::{filter_trivia, RemoteTriviaScorer, RuleTrivia, ScorerError, ScorerSource, TriviaScorer, TriviaVerdict};

use crate::ingest::RawIssue;
use crate::store::{Entity, Record, Store, StoreError};

/// Body prefix of issues mirrored from pull requests.
pub const PR_SENTINEL: &str = "This issue is automatically created based on existing pull request";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    PullRequest,
    Duplicate,
    NonEnglish,
    Empty,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::PullRequest => "pull_request",
            DropReason::Duplicate => "duplicate",
            DropReason::NonEnglish => "non_english",
            DropReason::Empty => "empty",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedIssue {
    /// Key of the raw issue (`tracker:id`).
    pub issue_id: String,
    pub tracker: String,
    pub title: String,
    /// Cleaned body; the title is kept separately.
    pub text: String,
    pub dropped: bool,
    pub drop_reason: Option<DropReason>,
    pub removal_stats: RemovalStats,
}

impl Record for PreprocessedIssue {
    const ENTITY: Entity = Entity::PreprocessedIssues;
    const CSV_COLUMNS: &'static [&'static str] =
        &["issue_id", "tracker", "title", "text", "dropped", "drop_reason"];

    fn key(&self) -> String {
        self.issue_id.clone()
    }

    fn references(&self) -> Vec<(&'static str, Entity, String)> {
        vec![("preprocessed_issue_raw", Entity::RawIssues, self.issue_id.clone())]
    }
}

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub fn detect_pull_request(issue: &RawIssue) -> bool {
    issue.url.contains("/pull/") || issue.body.trim_start().starts_with(PR_SENTINEL)
}

/// Indices of issues to keep: among equal `(title, body)` pairs the earliest
/// `created_at` wins, ties go to the earlier position. Order is preserved.
pub fn dedup(issues: &[RawIssue]) -> Vec<usize> {
    let mut winner: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, issue) in issues.iter().enumerate() {
        winner
            .entry((issue.title.as_str(), issue.body.as_str()))
            .and_modify(|w| {
                if issue.created_at < issues[*w].created_at {
                    *w = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = winner.into_values().collect();
    keep.sort_unstable();
    keep
}

/// Components applied to each issue.
pub struct Preprocessor {
    pub cleaner: MarkdownCleaner,
    pub detector: Box<dyn LanguageDetector>,
    pub trivia: Box<dyn TriviaScorer>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            cleaner: MarkdownCleaner::default(),
            detector: Box::new(StopwordDetector::default()),
            trivia: Box::new(RuleTrivia),
        }
    }
}

/// Per-tracker counts after a preprocessing run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TrackerSummary {
    pub downloaded: usize,
    pub remaining: usize,
    pub dropped: BTreeMap<String, usize>,
}

impl Preprocessor {
    fn dropped(issue: &RawIssue, reason: DropReason, stats: RemovalStats) -> PreprocessedIssue {
        PreprocessedIssue {
            issue_id: issue.key(),
            tracker: issue.tracker.clone(),
            title: issue.title.clone(),
            text: String::new(),
            dropped: true,
            drop_reason: Some(reason),
            removal_stats: stats,
        }
    }

    /// Pull-request check, language gate, markdown stripping, trivia removal,
    /// then the empty check.
    pub async fn preprocess_issue(&self, issue: &RawIssue) -> Result<PreprocessedIssue, ScorerError> {
        if detect_pull_request(issue) {
            return Ok(Self::dropped(issue, DropReason::PullRequest, RemovalStats::default()));
        }
        if self.detector.detect(&issue.body) != DetectedLanguage::English {
            return Ok(Self::dropped(issue, DropReason::NonEnglish, RemovalStats::default()));
        }
        let (text, mut stats) = self.cleaner.strip(&issue.body);
        let (text, trivia) = filter_trivia(&text, self.trivia.as_ref()).await?;
        stats.trivia_lines_removed = trivia;
        if text.trim().is_empty() {
            return Ok(Self::dropped(issue, DropReason::Empty, stats));
        }
        Ok(PreprocessedIssue {
            issue_id: issue.key(),
            tracker: issue.tracker.clone(),
            title: issue.title.clone(),
            text,
            dropped: false,
            drop_reason: None,
            removal_stats: stats,
        })
    }

    /// Preprocesses every raw issue in the store and records the outcome,
    /// including dropped issues with their reason.
    pub async fn run(&self, store: &Store) -> Result<BTreeMap<String, TrackerSummary>, PreprocessError> {
        let raw: Vec<RawIssue> = store.all()?;
        let mut summary: BTreeMap<String, TrackerSummary> = BTreeMap::new();
        for issue in &raw {
            summary.entry(issue.tracker.clone()).or_default().downloaded += 1;
        }

        let (prs, candidates): (Vec<&RawIssue>, Vec<&RawIssue>) =
            raw.iter().partition(|i| detect_pull_request(i));
        let owned: Vec<RawIssue> = candidates.iter().map(|i| (*i).clone()).collect();
        let keep = dedup(&owned);

        let mut outputs = Vec::with_capacity(raw.len());
        for issue in prs {
            outputs.push(Self::dropped(issue, DropReason::PullRequest, RemovalStats::default()));
        }
        let mut k = keep.iter().peekable();
        for (i, issue) in owned.iter().enumerate() {
            if k.peek() == Some(&&i) {
                k.next();
                outputs.push(self.preprocess_issue(issue).await?);
            } else {
                outputs.push(Self::dropped(issue, DropReason::Duplicate, RemovalStats::default()));
            }
        }

        for out in outputs {
            let entry = summary.entry(out.tracker.clone()).or_default();
            match out.drop_reason {
                Some(reason) => *entry.dropped.entry(reason.as_str().to_string()).or_default() += 1,
                None => entry.remaining += 1,
            }
            store.put(&out)?;
        }
        Ok(summary)
    }
}
