//! Issue harvesting from tracker REST APIs.
//!
//! Only the fields needed downstream are read (title, body, labels, state,
//! creation time, URL); discussion threads are never requested. Pages of one
//! tracker are fetched in order, and the page cursor is checkpointed in the
//! store so an interrupted harvest resumes where it stopped.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::{rfc3339, Clock};
use crate::store::{CheckpointStatus, Entity, Record, RunCheckpoint, Store, StoreError};

pub const HARVEST_STAGE: &str = "harvest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiKind {
    GithubRest,
    /// Paged responses read from `page-<N>.json` files in a local directory.
    GenericRestFixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerSource {
    pub name: String,
    pub base_url: String,
    pub api_kind: ApiKind,
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    #[serde(default = "default_page_size")]
    pub page_size: u32,
}

fn default_page_size() -> u32 {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueState {
    Open,
    Closed,
}

impl IssueState {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueState::Open => "open",
            IssueState::Closed => "closed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawIssue {
    pub id: String,
    pub tracker: String,
    pub url: String,
    pub title: String,
    pub body: String,
    pub labels: BTreeSet<String>,
    pub state: IssueState,
    #[serde(with = "rfc3339")]
    pub created_at: DateTime<Utc>,
    #[serde(with = "rfc3339")]
    pub fetched_at: DateTime<Utc>,
}

/// Store key of an issue: `<tracker>:<id>`.
pub fn issue_key(tracker: &str, id: &str) -> String {
    format!("{tracker}:{id}")
}

impl Record for RawIssue {
    const ENTITY: Entity = Entity::RawIssues;
    const CSV_COLUMNS: &'static [&'static str] = &[
        "id", "tracker", "url", "title", "body", "labels", "state", "created_at", "fetched_at",
    ];

    fn key(&self) -> String {
        issue_key(&self.tracker, &self.id)
    }
}

/// Default excluded labels: issues the maintainers did not treat as real
/// requirements.
pub const DEFAULT_EXCLUDED_LABELS: [&str; 6] = [
    "cannot reproduce",
    "duplicate",
    "needs update",
    "invalid",
    "refactoring",
    "test",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestFilter {
    #[serde(default = "default_state")]
    pub required_state: IssueState,
    #[serde(default = "default_excluded")]
    pub excluded_labels: BTreeSet<String>,
}

fn default_state() -> IssueState {
    IssueState::Closed
}

fn default_excluded() -> BTreeSet<String> {
    DEFAULT_EXCLUDED_LABELS.iter().map(|s| s.to_string()).collect()
}

impl Default for HarvestFilter {
    fn default() -> Self {
        HarvestFilter {
            required_state: default_state(),
            excluded_labels: default_excluded(),
        }
    }
}

fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

/// True iff the issue has the wrong state or carries an excluded label.
/// Labels compare case-insensitively after trimming.
pub fn is_excluded(issue: &RawIssue, filter: &HarvestFilter) -> bool {
    if issue.state != filter.required_state {
        return true;
    }
    let excluded: BTreeSet<String> = filter
        .excluded_labels
        .iter()
        .map(|l| normalize_label(l))
        .collect();
    issue
        .labels
        .iter()
        .any(|l| excluded.contains(&normalize_label(l)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackoffPolicy {
    pub initial: Duration,
    pub max: Duration,
    pub max_retries: u32,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        BackoffPolicy {
            initial: Duration::from_secs(1),
            max: Duration::from_secs(60),
            max_retries: 8,
        }
    }
}

impl BackoffPolicy {
    /// Delay before retry number `attempt` (zero-based): doubling, capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.min(31)).unwrap_or(u32::MAX);
        self.initial.saturating_mul(factor).min(self.max)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarvestError {
    #[error("{tracker}: network failure on page {page}: {message} (resume from page {page})")]
    Network {
        tracker: String,
        page: u32,
        message: String,
    },
    #[error("{tracker}: authentication rejected (HTTP {status}): {message}")]
    Auth {
        tracker: String,
        status: u16,
        message: String,
    },
    #[error("{tracker}: unreadable page {url}: {reason}")]
    MalformedPage {
        tracker: String,
        url: String,
        reason: String,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl HarvestError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, HarvestError::Network { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HarvestReport {
    pub tracker: String,
    pub first_page: u32,
    pub pages: u32,
    pub fetched: usize,
    pub emitted: Vec<String>,
    pub excluded: usize,
    pub malformed: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WireLabel {
    Named { name: String },
    Plain(String),
}

#[derive(Debug, Deserialize)]
struct WireIssue {
    number: u64,
    title: String,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    labels: Vec<WireLabel>,
    state: IssueState,
    created_at: String,
    html_url: String,
}

enum PageOutcome {
    Items(Vec<serde_json::Value>),
    End,
}

pub struct Harvester {
    client: reqwest::Client,
    backoff: BackoffPolicy,
    clock: Arc<dyn Clock>,
}

impl Harvester {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self::with_backoff(clock, BackoffPolicy::default())
    }

    pub fn with_backoff(clock: Arc<dyn Clock>, backoff: BackoffPolicy) -> Self {
        Harvester {
            client: reqwest::Client::builder()
                .user_agent("cruise-harvester")
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
            backoff,
            clock,
        }
    }

    /// Fetches every page of `source`, persisting the issues that pass
    /// `filter`. Resumes from a stored page cursor when a previous harvest
    /// of the same tracker was interrupted.
    pub async fn harvest(
        &self,
        source: &TrackerSource,
        filter: &HarvestFilter,
        store: &Store,
    ) -> Result<HarvestReport, HarvestError> {
        let cursor_key = RunCheckpoint::key_for(HARVEST_STAGE, "", &source.name);
        let first_page = match store.get::<RunCheckpoint>(&cursor_key)? {
            Some(cp) if cp.status == CheckpointStatus::Pending => cp
                .detail
                .as_deref()
                .and_then(|d| d.parse().ok())
                .unwrap_or(1),
            _ => 1,
        };
        let mut report = HarvestReport {
            tracker: source.name.clone(),
            first_page,
            ..Default::default()
        };
        let page_size = source.page_size.max(1);
        let mut page = first_page;
        loop {
            let (url, outcome) = match self.fetch_page(source, filter, page).await {
                Ok(v) => v,
                Err(e) => {
                    store.put(&RunCheckpoint {
                        stage: HARVEST_STAGE.into(),
                        story_id: String::new(),
                        issue_id: source.name.clone(),
                        status: CheckpointStatus::Pending,
                        detail: Some(page.to_string()),
                    })?;
                    return Err(e);
                }
            };
            let items = match outcome {
                PageOutcome::Items(items) => items,
                PageOutcome::End => break,
            };
            report.pages += 1;
            let count = items.len();
            let fetched_at = self.clock.now();
            for item in items {
                report.fetched += 1;
                let issue = match decode_issue(item, &source.name, fetched_at) {
                    Ok(issue) => issue,
                    Err(reason) => {
                        tracing::warn!(source = %url, %reason, "skipping malformed issue record");
                        report.malformed += 1;
                        continue;
                    }
                };
                if is_excluded(&issue, filter) {
                    report.excluded += 1;
                    continue;
                }
                store.put(&issue)?;
                report.emitted.push(issue.key());
            }
            page += 1;
            store.put(&RunCheckpoint {
                stage: HARVEST_STAGE.into(),
                story_id: String::new(),
                issue_id: source.name.clone(),
                status: CheckpointStatus::Pending,
                detail: Some(page.to_string()),
            })?;
            if count < page_size as usize {
                break;
            }
        }
        store.put(&RunCheckpoint {
            stage: HARVEST_STAGE.into(),
            story_id: String::new(),
            issue_id: source.name.clone(),
            status: CheckpointStatus::Done,
            detail: None,
        })?;
        Ok(report)
    }

    async fn fetch_page(
        &self,
        source: &TrackerSource,
        filter: &HarvestFilter,
        page: u32,
    ) -> Result<(String, PageOutcome), HarvestError> {
        match source.api_kind {
            ApiKind::GenericRestFixture => fixture_page(source, page),
            ApiKind::GithubRest => self.http_page(source, filter, page).await,
        }
    }

    async fn http_page(
        &self,
        source: &TrackerSource,
        filter: &HarvestFilter,
        page: u32,
    ) -> Result<(String, PageOutcome), HarvestError> {
        let url = format!(
            "{}/issues?state={}&page={}&per_page={}",
            source.base_url.trim_end_matches('/'),
            filter.required_state.as_str(),
            page,
            source.page_size.max(1)
        );
        let mut attempt = 0u32;
        loop {
            let mut req = self
                .client
                .get(&url)
                .header("Accept", "application/vnd.github+json");
            if let Some(token) = &source.auth_token {
                req = req.bearer_auth(token);
            }
            let retry_reason = match req.send().await {
                Err(e) => e.to_string(),
                Ok(resp) => {
                    let status = resp.status();
                    if status == reqwest::StatusCode::UNAUTHORIZED {
                        let message = resp.text().await.unwrap_or_default();
                        return Err(HarvestError::Auth {
                            tracker: source.name.clone(),
                            status: status.as_u16(),
                            message,
                        });
                    }
                    if status == reqwest::StatusCode::FORBIDDEN
                        || status == reqwest::StatusCode::TOO_MANY_REQUESTS
                    {
                        format!("rate limited (HTTP {})", status.as_u16())
                    } else if status.is_server_error() {
                        format!("HTTP {}", status.as_u16())
                    } else if !status.is_success() {
                        let body = resp.text().await.unwrap_or_default();
                        return Err(HarvestError::MalformedPage {
                            tracker: source.name.clone(),
                            url,
                            reason: format!("HTTP {}: {body}", status.as_u16()),
                        });
                    } else {
                        let body = resp.text().await.map_err(|e| HarvestError::Network {
                            tracker: source.name.clone(),
                            page,
                            message: e.to_string(),
                        })?;
                        let items = parse_page(&source.name, &url, &body)?;
                        let outcome = if items.is_empty() {
                            PageOutcome::End
                        } else {
                            PageOutcome::Items(items)
                        };
                        return Ok((url, outcome));
                    }
                }
            };
            if attempt >= self.backoff.max_retries {
                return Err(HarvestError::Network {
                    tracker: source.name.clone(),
                    page,
                    message: retry_reason,
                });
            }
            let delay = self.backoff.delay(attempt);
            tracing::info!(tracker = %source.name, page, ?delay, reason = %retry_reason, "backing off");
            tokio::time::sleep(delay).await;
            attempt += 1;
        }
    }
}

fn fixture_page(source: &TrackerSource, page: u32) -> Result<(String, PageOutcome), HarvestError> {
    let dir = PathBuf::from(
        source
            .base_url
            .strip_prefix("file://")
            .unwrap_or(&source.base_url),
    );
    let path = dir.join(format!("page-{page}.json"));
    let url = path.display().to_string();
    let body = match std::fs::read_to_string(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((url, PageOutcome::End)),
        Err(e) => {
            return Err(HarvestError::Network {
                tracker: source.name.clone(),
                page,
                message: e.to_string(),
            })
        }
    };
    let items = parse_page(&source.name, &url, &body)?;
    let outcome = if items.is_empty() {
        PageOutcome::End
    } else {
        PageOutcome::Items(items)
    };
    Ok((url, outcome))
}

fn parse_page(tracker: &str, url: &str, body: &str) -> Result<Vec<serde_json::Value>, HarvestError> {
    serde_json::from_str(body).map_err(|e| HarvestError::MalformedPage {
        tracker: tracker.to_string(),
        url: url.to_string(),
        reason: format!("expected a JSON array of issues: {e}"),
    })
}

fn decode_issue(
    item: serde_json::Value,
    tracker: &str,
    fetched_at: DateTime<Utc>,
) -> Result<RawIssue, String> {
    let wire: WireIssue = serde_json::from_value(item).map_err(|e| e.to_string())?;
    let created_at = DateTime::parse_from_rfc3339(&wire.created_at)
        .map_err(|e| format!("created_at: {e}"))?
        .with_timezone(&Utc);
    if created_at > fetched_at {
        return Err(format!("created_at {created_at} is after fetch time"));
    }
    Ok(RawIssue {
        id: wire.number.to_string(),
        tracker: tracker.to_string(),
        url: wire.html_url,
        title: wire.title,
        body: wire.body.unwrap_or_default(),
        labels: wire
            .labels
            .into_iter()
            .map(|l| match l {
                WireLabel::Named { name } => name,
                WireLabel::Plain(name) => name,
            })
            .collect(),
        state: wire.state,
        created_at,
        fetched_at,
    })
}

/// Harvests several trackers concurrently; one result per source, in order.
pub async fn harvest_all(
    harvester: &Harvester,
    sources: &[TrackerSource],
    filter: &HarvestFilter,
    store: &Store,
) -> Vec<Result<HarvestReport, HarvestError>> {
    futures::future::join_all(sources.iter().map(|s| harvester.harvest(s, filter, store))).await
}

/// In-process tracker that serves a JSON corpus in the tracker REST shape,
/// honouring `state`, `page` and `per_page`.
#[derive(Clone)]
pub struct FixtureTracker {
    corpus: Arc<Vec<serde_json::Value>>,
    /// Number of leading requests answered with HTTP 429.
    rate_limited: Arc<AtomicUsize>,
    requests: Arc<AtomicUsize>,
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    state: Option<String>,
    page: Option<usize>,
    per_page: Option<usize>,
}

impl FixtureTracker {
    pub fn new(corpus: Vec<serde_json::Value>) -> Self {
        FixtureTracker {
            corpus: Arc::new(corpus),
            rate_limited: Arc::new(AtomicUsize::new(0)),
            requests: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn rate_limit_first(self, n: usize) -> Self {
        self.rate_limited.store(n, Ordering::SeqCst);
        self
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/issues", get(serve_fixture_page))
            .with_state(self.clone())
    }
}

async fn serve_fixture_page(
    State(tracker): State<FixtureTracker>,
    Query(q): Query<PageQuery>,
) -> Response {
    tracker.requests.fetch_add(1, Ordering::SeqCst);
    let limited = tracker
        .rate_limited
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    if limited {
        return (StatusCode::TOO_MANY_REQUESTS, "slow down").into_response();
    }
    let per_page = q.per_page.unwrap_or(30).max(1);
    let page = q.page.unwrap_or(1).max(1);
    let state = q.state.unwrap_or_else(|| "open".into());
    let selected: Vec<&serde_json::Value> = tracker
        .corpus
        .iter()
        .filter(|v| state == "all" || v.get("state").and_then(|s| s.as_str()) == Some(&state))
        .skip((page - 1) * per_page)
        .take(per_page)
        .collect();
    Json(selected).into_response()
}
