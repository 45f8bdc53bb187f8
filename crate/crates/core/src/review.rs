//! Review queue HTTP API: relevant criteria per story, reviewer verdicts,
//! consensus and agreement statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::clock::{rfc3339, Clock};
use crate::gherkin::GherkinScenario;
use crate::llm::RelevanceLabel;
use crate::metrics::{AgreementReport, AnnotationMatrix, Verdict};
use crate::pipeline::{sample, GeneratedCriterion, RelevanceAssessment, UserStory};
use crate::preprocess::PreprocessedIssue;
use crate::store::{Entity, Record, Store, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub criterion_id: String,
    pub reviewer: String,
    pub verdict: Verdict,
    #[serde(with = "rfc3339")]
    pub decided_at: DateTime<Utc>,
}

impl ReviewDecision {
    pub fn key_for(criterion_id: &str, reviewer: &str) -> String {
        format!("{criterion_id}|{reviewer}")
    }
}

impl Record for ReviewDecision {
    const ENTITY: Entity = Entity::ReviewDecisions;
    const CSV_COLUMNS: &'static [&'static str] = &["criterion_id", "reviewer", "verdict", "decided_at"];

    fn key(&self) -> String {
        Self::key_for(&self.criterion_id, &self.reviewer)
    }

    fn references(&self) -> Vec<(&'static str, Entity, String)> {
        vec![
            ("decision_criterion", Entity::Criteria, self.criterion_id.clone()),
            ("decision_assessment", Entity::Assessments, self.criterion_id.clone()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewConfig {
    /// Approvals needed for acceptance.
    pub threshold_m: usize,
    /// Reviewers on the panel.
    pub panel_n: usize,
    /// Criteria admitted to the queue per story.
    pub per_story_cap: usize,
    /// Seed of the admission sample.
    pub seed: u64,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            threshold_m: 3,
            panel_n: 4,
            per_story_cap: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusStatus {
    Accepted,
    Rejected,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Consensus {
    pub status: ConsensusStatus,
    pub approvals: usize,
    pub declines: usize,
    pub threshold_m: usize,
    pub panel_n: usize,
}

/// Accepted at `m` approvals; rejected once `m` approvals are out of reach
/// for an `n`-member panel.
pub fn consensus_status(approvals: usize, declines: usize, m: usize, n: usize) -> ConsensusStatus {
    if approvals >= m {
        ConsensusStatus::Accepted
    } else if declines > n.saturating_sub(m) {
        ConsensusStatus::Rejected
    } else {
        ConsensusStatus::Pending
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Integrity { .. } => ApiError::new(StatusCode::CONFLICT, "integrity_violation", e.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StorySummary {
    pub story: UserStory,
    pub pending: usize,
    pub decided: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StoryPage {
    pub items: Vec<StorySummary>,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SourceIssue {
    pub issue_id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionView {
    pub criterion_id: String,
    pub scenario: GherkinScenario,
    pub gherkin: String,
    pub source_issue: SourceIssue,
    pub explanation: String,
    /// Verdicts visible to the requester.
    pub decisions: Vec<ReviewDecision>,
    /// True while other reviewers' verdicts are withheld.
    pub decisions_hidden: bool,
    pub my_verdict: Option<Verdict>,
    pub consensus: Option<Consensus>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StoryCriteria {
    pub story: UserStory,
    pub criteria: Vec<CriterionView>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecisionResponse {
    pub decision: ReviewDecision,
    pub consensus: Consensus,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportResponse {
    pub decisions: usize,
    pub reviewers: Vec<String>,
    /// Approved/declined counts per reviewer, available from the first decision.
    pub per_reviewer: BTreeMap<String, crate::metrics::RaterCounts>,
    pub consensus_accepted: usize,
    /// Agreement statistics; absent until two reviewers have decided.
    pub report: Option<AgreementReport>,
}

/// Read and write access to the review queue; every answer derives from the store.
pub struct ReviewService {
    store: Arc<Store>,
    config: ReviewConfig,
    clock: Arc<dyn Clock>,
}

impl ReviewService {
    pub fn new(store: Arc<Store>, config: ReviewConfig, clock: Arc<dyn Clock>) -> Self {
        ReviewService { store, config, clock }
    }

    pub fn config(&self) -> &ReviewConfig {
        &self.config
    }

    /// Relevant, well-formed criteria grouped by story; stories above the cap
    /// are reduced by a seeded sample.
    pub fn queue(&self) -> Result<BTreeMap<String, Vec<GeneratedCriterion>>, StoreError> {
        let mut by_story: BTreeMap<String, Vec<GeneratedCriterion>> = BTreeMap::new();
        for c in self.store.all::<GeneratedCriterion>()? {
            if c.malformed || c.scenario.is_none() {
                continue;
            }
            let relevant = self
                .store
                .get::<RelevanceAssessment>(&c.id)?
                .is_some_and(|a| a.label == RelevanceLabel::Relevant);
            if relevant {
                by_story.entry(c.story_id.clone()).or_default().push(c);
            }
        }
        for list in by_story.values_mut() {
            if list.len() > self.config.per_story_cap {
                let mut admitted = sample(list, self.config.per_story_cap, self.config.seed).expect("cap below population");
                admitted.sort_by(|a, b| a.id.cmp(&b.id));
                *list = admitted;
            }
        }
        Ok(by_story)
    }

    fn decisions_for(&self, criterion_id: &str) -> Result<Vec<ReviewDecision>, StoreError> {
        Ok(self
            .store
            .all::<ReviewDecision>()?
            .into_iter()
            .filter(|d| d.criterion_id == criterion_id)
            .collect())
    }

    fn consensus_of(&self, decisions: &[ReviewDecision]) -> Consensus {
        let approvals = decisions.iter().filter(|d| d.verdict == Verdict::Approved).count();
        let declines = decisions.len() - approvals;
        Consensus {
            status: consensus_status(approvals, declines, self.config.threshold_m, self.config.panel_n),
            approvals,
            declines,
            threshold_m: self.config.threshold_m,
            panel_n: self.config.panel_n,
        }
    }

    pub fn stories(&self, offset: usize, limit: usize, reviewer: Option<&str>) -> Result<StoryPage, ApiError> {
        let queue = self.queue()?;
        let decisions = self.store.all::<ReviewDecision>()?;
        let decided_by: BTreeSet<(&str, &str)> = decisions
            .iter()
            .filter(|d| reviewer.is_none_or(|r| d.reviewer == r))
            .map(|d| (d.criterion_id.as_str(), d.reviewer.as_str()))
            .collect();
        let decided_ids: BTreeSet<&str> = decided_by.iter().map(|(c, _)| *c).collect();
        let total = queue.len();
        let mut items = Vec::new();
        for (story_id, criteria) in queue.iter().skip(offset).take(limit) {
            let Some(story) = self.store.get::<UserStory>(story_id)? else {
                continue;
            };
            let decided = criteria.iter().filter(|c| decided_ids.contains(c.id.as_str())).count();
            items.push(StorySummary {
                story,
                pending: criteria.len() - decided,
                decided,
            });
        }
        Ok(StoryPage { items, total })
    }

    pub fn story_criteria(&self, story_id: &str, reviewer: Option<&str>) -> Result<StoryCriteria, ApiError> {
        let story = self
            .store
            .get::<UserStory>(story_id)?
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "story_not_found", format!("no story {story_id:?}")))?;
        let queue = self.queue()?;
        let mut criteria = Vec::new();
        for c in queue.get(story_id).into_iter().flatten() {
            let issue = self.store.get::<PreprocessedIssue>(&c.issue_id)?;
            let assessment = self.store.get::<RelevanceAssessment>(&c.id)?;
            let all = self.decisions_for(&c.id)?;
            let mine = reviewer.and_then(|r| all.iter().find(|d| d.reviewer == r)).cloned();
            let reveal = mine.is_some();
            let consensus = reveal.then(|| self.consensus_of(&all));
            let scenario = c.scenario.clone().expect("queue holds parsed criteria");
            criteria.push(CriterionView {
                criterion_id: c.id.clone(),
                gherkin: crate::gherkin::serialize(&scenario),
                scenario,
                source_issue: SourceIssue {
                    issue_id: c.issue_id.clone(),
                    title: issue.as_ref().map(|i| i.title.clone()).unwrap_or_default(),
                    text: issue.map(|i| i.text).unwrap_or_default(),
                },
                explanation: assessment.map(|a| a.explanation).unwrap_or_default(),
                decisions_hidden: !reveal && !all.is_empty(),
                decisions: if reveal { all } else { Vec::new() },
                my_verdict: mine.map(|d| d.verdict),
                consensus,
            });
        }
        Ok(StoryCriteria { story, criteria })
    }

    /// Records a verdict; re-posting the same verdict leaves the store untouched.
    pub fn decide(&self, criterion_id: &str, reviewer: &str, verdict: &str) -> Result<DecisionResponse, ApiError> {
        let reviewer = reviewer.trim();
        if reviewer.is_empty() {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_reviewer", "reviewer must not be empty"));
        }
        let verdict = Verdict::parse(verdict).ok_or_else(|| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_verdict",
                format!("verdict must be \"approved\" or \"declined\", got {verdict:?}"),
            )
        })?;
        let criterion = self.store.get::<GeneratedCriterion>(criterion_id)?.ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, "criterion_not_found", format!("no criterion {criterion_id:?}"))
        })?;
        let in_queue = self
            .queue()?
            .get(&criterion.story_id)
            .is_some_and(|list| list.iter().any(|c| c.id == criterion.id));
        if !in_queue {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "not_in_review_queue",
                format!("criterion {criterion_id:?} is not in the review queue"),
            ));
        }
        let key = ReviewDecision::key_for(criterion_id, reviewer);
        let decision = match self.store.get::<ReviewDecision>(&key)? {
            Some(existing) if existing.verdict == verdict => existing,
            _ => {
                let d = ReviewDecision {
                    criterion_id: criterion_id.to_string(),
                    reviewer: reviewer.to_string(),
                    verdict,
                    decided_at: self.clock.now(),
                };
                self.store.put(&d)?;
                d
            }
        };
        let consensus = self.consensus_of(&self.decisions_for(criterion_id)?);
        Ok(DecisionResponse { decision, consensus })
    }

    pub fn report(&self) -> Result<ReportResponse, ApiError> {
        let mut decisions = self.store.all::<ReviewDecision>()?;
        decisions.sort_by(|a, b| (&a.reviewer, &a.criterion_id).cmp(&(&b.reviewer, &b.criterion_id)));
        let mut per_reviewer: BTreeMap<String, crate::metrics::RaterCounts> = BTreeMap::new();
        let mut by_item: BTreeMap<&str, usize> = BTreeMap::new();
        for d in &decisions {
            let counts = per_reviewer.entry(d.reviewer.clone()).or_default();
            if d.verdict == Verdict::Approved {
                counts.approved += 1;
                *by_item.entry(&d.criterion_id).or_default() += 1;
            } else {
                counts.declined += 1;
            }
        }
        let consensus_accepted = by_item.values().filter(|n| **n >= self.config.threshold_m).count();
        let report = AnnotationMatrix::from_triples(
            decisions
                .iter()
                .map(|d| (d.criterion_id.clone(), d.reviewer.clone(), d.verdict)),
        )
        .ok()
        .map(|m| m.report(self.config.threshold_m));
        Ok(ReportResponse {
            decisions: decisions.len(),
            reviewers: per_reviewer.keys().cloned().collect(),
            per_reviewer,
            consensus_accepted,
            report,
        })
    }
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    #[serde(default)]
    offset: Option<usize>,
    #[serde(default)]
    limit: Option<usize>,
    #[serde(default)]
    reviewer: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ReviewerQuery {
    #[serde(default)]
    reviewer: Option<String>,
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    reviewer: String,
    verdict: String,
}

pub const DEFAULT_PAGE_LIMIT: usize = 50;

async fn list_stories(State(svc): State<Arc<ReviewService>>, Query(q): Query<PageQuery>) -> Result<Json<StoryPage>, ApiError> {
    let reviewer = q.reviewer.as_deref().filter(|r| !r.trim().is_empty());
    Ok(Json(svc.stories(q.offset.unwrap_or(0), q.limit.unwrap_or(DEFAULT_PAGE_LIMIT), reviewer)?))
}

async fn list_criteria(
    State(svc): State<Arc<ReviewService>>,
    Path(id): Path<String>,
    Query(q): Query<ReviewerQuery>,
) -> Result<Json<StoryCriteria>, ApiError> {
    let reviewer = q.reviewer.as_deref().filter(|r| !r.trim().is_empty());
    Ok(Json(svc.story_criteria(&id, reviewer)?))
}

async fn post_decision(
    State(svc): State<Arc<ReviewService>>,
    Path(id): Path<String>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Json<DecisionResponse>, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::new(e.status(), "invalid_body", e.body_text()))?;
    Ok(Json(svc.decide(&id, &body.reviewer, &body.verdict)?))
}

async fn get_report(State(svc): State<Arc<ReviewService>>) -> Result<Json<ReportResponse>, ApiError> {
    Ok(Json(svc.report()?))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// The JSON API, plus the UI's static files when a directory is given.
pub fn router(service: Arc<ReviewService>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/stories", get(list_stories))
        .route("/api/stories/{id}/criteria", get(list_criteria))
        .route("/api/criteria/{id}/decision", post(post_decision))
        .route("/api/report", get(get_report))
        .route("/api/{*rest}", get(not_found).post(not_found))
        .with_state(service);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

/// Serves the review API (and UI) on an already bound listener.
pub async fn serve(listener: tokio::net::TcpListener, service: Arc<ReviewService>, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    axum::serve(listener, router(service, ui_dir)).await
}
