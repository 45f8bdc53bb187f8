//! Matching, generation and assessment over sampled story × issue pairs.

mod report;
mod sample;
mod translate;
mod types;

use std::collections::BTreeMap;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use thiserror::Error;

pub use report::{histogram_bucket, RunReport, StoryRow, HISTOGRAM_BUCKETS};
pub use sample::{sample, shuffle, SplitMix64};
pub use translate::{translate, FixtureTranslator, HttpTranslator, TranslateError, TranslationOutcome, Translator};
pub use types::{
    criterion_id, majority_vote, pair_key, GeneratedCriterion, Language, MatchRecord, RelevanceAssessment, SampleSpec,
    UserStory, CRITERIA_SEPARATOR,
};

use crate::clock::Clock;
use crate::gherkin;
use crate::llm::{
    parse_binary, parse_label, Backend, BinaryAnswer, LlmError, Placeholder, Placeholders, PromptInstance, PromptKind,
    PromptTemplates, RelevanceLabel,
};
use crate::preprocess::PreprocessedIssue;
use crate::store::{CheckpointStatus, RunCheckpoint, Store, StoreError};

/// Appended to a match prompt whose reply was neither yes nor no.
pub const MATCH_REASK: &str = "Answer with exactly one word.";
/// Appended to a generation prompt whose reply did not parse as Gherkin.
pub const GENERATE_REASK: &str = "Output only the Gherkin scenario.";
/// Appended to an assessment prompt whose reply carried no label.
pub const ASSESS_REASK: &str = "Start your answer with the LABEL \"relevant\" or \"irrelevant\".";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Translate(#[from] TranslateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Match,
    Generate,
    Assess,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Match, Stage::Generate, Stage::Assess];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Match => "match",
            Stage::Generate => "generate",
            Stage::Assess => "assess",
        }
    }
}

/// Prompt text for an issue: title line, then the cleaned body.
pub fn issue_prompt_text(issue: &PreprocessedIssue) -> String {
    if issue.title.trim().is_empty() {
        issue.text.clone()
    } else {
        format!("{}\n{}", issue.title.trim(), issue.text)
    }
}

pub struct Pipeline {
    store: Arc<Store>,
    matchers: Vec<Arc<Backend>>,
    generator: Arc<Backend>,
    assessor: Arc<Backend>,
    templates: PromptTemplates,
    domain_description: String,
    clock: Arc<dyn Clock>,
    translator: Option<Arc<dyn Translator>>,
    concurrency: usize,
}

impl Pipeline {
    pub fn new(
        store: Arc<Store>,
        matchers: Vec<Arc<Backend>>,
        generator: Arc<Backend>,
        assessor: Arc<Backend>,
        domain_description: impl Into<String>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, PipelineError> {
        if matchers.is_empty() {
            return Err(PipelineError::Validation("at least one matching backend is required".into()));
        }
        let mut names: Vec<&str> = matchers.iter().map(|b| b.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(PipelineError::Validation("matching backend names must be unique".into()));
        }
        Ok(Pipeline {
            store,
            matchers,
            generator,
            assessor,
            templates: PromptTemplates::default(),
            domain_description: domain_description.into(),
            clock,
            translator: None,
            concurrency: 8,
        })
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_translator(mut self, translator: Arc<dyn Translator>) -> Self {
        self.translator = Some(translator);
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Transport calls issued by every backend of this pipeline.
    pub fn backend_calls(&self) -> u64 {
        let mut seen: Vec<*const Backend> = Vec::new();
        let mut total = 0;
        for b in self.matchers.iter().chain([&self.generator, &self.assessor]) {
            let p = Arc::as_ptr(b);
            if !seen.contains(&p) {
                seen.push(p);
                total += b.calls();
            }
        }
        total
    }

    fn checkpoint(&self, stage: Stage, story: &str, issue: &str, status: CheckpointStatus, detail: Option<String>) -> Result<(), StoreError> {
        self.store.put(&RunCheckpoint {
            stage: stage.as_str().to_string(),
            story_id: story.to_string(),
            issue_id: issue.to_string(),
            status,
            detail,
        })
    }

    fn ensure_done(&self, stage: Stage, story: &str, issue: &str) -> Result<(), StoreError> {
        let key = RunCheckpoint::key_for(stage.as_str(), story, issue);
        match self.store.get::<RunCheckpoint>(&key)? {
            Some(c) if c.status == CheckpointStatus::Done => Ok(()),
            _ => self.checkpoint(stage, story, issue, CheckpointStatus::Done, None),
        }
    }

    fn render(&self, kind: PromptKind, values: &[(Placeholder, String)]) -> Result<PromptInstance, PipelineError> {
        let placeholders: Placeholders = values.iter().cloned().collect();
        Ok(self.templates.render(kind, placeholders)?)
    }

    async fn vote(&self, backend: &Backend, prompt: &PromptInstance) -> Result<(u8, String), LlmError> {
        let reply = backend.complete(prompt).await?;
        match parse_binary(&reply.raw) {
            BinaryAnswer::Yes => return Ok((1, reply.raw)),
            BinaryAnswer::No => return Ok((0, reply.raw)),
            BinaryAnswer::Unparseable => {}
        }
        let retry = backend.complete(&prompt.with_suffix(MATCH_REASK)).await?;
        let vote = u8::from(parse_binary(&retry.raw) == BinaryAnswer::Yes);
        Ok((vote, retry.raw))
    }

    /// Asks every matching backend and records the majority decision. A stored
    /// record short-circuits without backend calls.
    pub async fn match_pair(&self, story: &UserStory, issue: &PreprocessedIssue) -> Result<MatchRecord, PipelineError> {
        let key = pair_key(&story.id, &issue.issue_id);
        if let Some(existing) = self.store.get::<MatchRecord>(&key)? {
            self.ensure_done(Stage::Match, &story.id, &issue.issue_id)?;
            return Ok(existing);
        }
        if issue.dropped {
            return Err(PipelineError::Precondition(format!("issue {} was dropped in preprocessing", issue.issue_id)));
        }
        let prompt = self.render(
            PromptKind::Match,
            &[
                (Placeholder::DomainDescription, self.domain_description.clone()),
                (Placeholder::UserStory, story.text.clone()),
                (Placeholder::Issue, issue_prompt_text(issue)),
            ],
        )?;
        let results = futures::future::join_all(self.matchers.iter().map(|b| self.vote(b, &prompt))).await;
        let mut votes = BTreeMap::new();
        let mut replies = BTreeMap::new();
        for (backend, result) in self.matchers.iter().zip(results) {
            match result {
                Ok((vote, raw)) => {
                    votes.insert(backend.name().to_string(), vote);
                    replies.insert(backend.name().to_string(), raw);
                }
                Err(e) => {
                    self.checkpoint(Stage::Match, &story.id, &issue.issue_id, CheckpointStatus::Pending, Some(e.to_string()))?;
                    return Err(e.into());
                }
            }
        }
        let record = MatchRecord::new(&story.id, &issue.issue_id, votes, replies)?;
        self.store.put(&record)?;
        self.checkpoint(Stage::Match, &story.id, &issue.issue_id, CheckpointStatus::Done, None)?;
        Ok(record)
    }

    /// Generates one criterion for a matched pair, re-asking once when the
    /// reply is not a Gherkin scenario.
    pub async fn generate_criterion(&self, story: &UserStory, issue: &PreprocessedIssue) -> Result<GeneratedCriterion, PipelineError> {
        let id = criterion_id(&story.id, &issue.issue_id);
        if let Some(existing) = self.store.get::<GeneratedCriterion>(&id)? {
            self.ensure_done(Stage::Generate, &story.id, &issue.issue_id)?;
            return Ok(existing);
        }
        let matched = self
            .store
            .get::<MatchRecord>(&pair_key(&story.id, &issue.issue_id))?
            .is_some_and(|m| m.decision == 1);
        if !matched {
            return Err(PipelineError::Precondition(format!(
                "no positive match for story {} and issue {}",
                story.id, issue.issue_id
            )));
        }
        let prompt = self.render(
            PromptKind::Generate,
            &[
                (Placeholder::UserStory, story.text.clone()),
                (Placeholder::Issue, issue_prompt_text(issue)),
            ],
        )?;
        let attempt = async {
            let reply = self.generator.complete(&prompt).await?;
            if gherkin::parse(&reply.raw).is_ok() {
                return Ok::<_, LlmError>(reply.raw);
            }
            Ok(self.generator.complete(&prompt.with_suffix(GENERATE_REASK)).await?.raw)
        };
        let raw = match attempt.await {
            Ok(raw) => raw,
            Err(e) => {
                self.checkpoint(Stage::Generate, &story.id, &issue.issue_id, CheckpointStatus::Pending, Some(e.to_string()))?;
                return Err(e.into());
            }
        };
        let criterion = GeneratedCriterion::from_reply(&story.id, &issue.issue_id, self.generator.name(), &raw, self.clock.now());
        if criterion.malformed {
            tracing::warn!(criterion = %criterion.id, "generated criterion is not valid Gherkin");
        }
        self.store.put(&criterion)?;
        self.checkpoint(Stage::Generate, &story.id, &issue.issue_id, CheckpointStatus::Done, None)?;
        Ok(criterion)
    }

    /// Labels a well-formed criterion relevant or irrelevant; a reply without
    /// a label after one re-ask counts as irrelevant.
    pub async fn assess_criterion(
        &self,
        story: &UserStory,
        criterion: &GeneratedCriterion,
        issue: &PreprocessedIssue,
    ) -> Result<RelevanceAssessment, PipelineError> {
        if let Some(existing) = self.store.get::<RelevanceAssessment>(&criterion.id)? {
            self.ensure_done(Stage::Assess, &story.id, &issue.issue_id)?;
            return Ok(existing);
        }
        let Some(gherkin_text) = criterion.gherkin() else {
            return Err(PipelineError::Precondition(format!("criterion {} is malformed", criterion.id)));
        };
        let prompt = self.render(
            PromptKind::Assess,
            &[
                (Placeholder::UserStory, story.text.clone()),
                (Placeholder::AcceptanceCriteria, story.criteria_text()),
                (Placeholder::NewCriterion, gherkin_text),
                (Placeholder::Issue, issue_prompt_text(issue)),
            ],
        )?;
        let attempt = async {
            let reply = self.assessor.complete(&prompt).await?;
            let parsed = parse_label(&reply.raw);
            if parsed.label.is_some() {
                return Ok::<_, LlmError>((parsed, reply.raw));
            }
            let retry = self.assessor.complete(&prompt.with_suffix(ASSESS_REASK)).await?;
            Ok((parse_label(&retry.raw), retry.raw))
        };
        let (parsed, raw) = match attempt.await {
            Ok(r) => r,
            Err(e) => {
                self.checkpoint(Stage::Assess, &story.id, &issue.issue_id, CheckpointStatus::Pending, Some(e.to_string()))?;
                return Err(e.into());
            }
        };
        let assessment = RelevanceAssessment {
            criterion_id: criterion.id.clone(),
            label: parsed.label.unwrap_or(RelevanceLabel::Irrelevant),
            explanation: parsed.explanation,
            assessor_backend: self.assessor.name().to_string(),
            parsed: parsed.label.is_some(),
            raw_reply: raw,
        };
        self.store.put(&assessment)?;
        self.checkpoint(Stage::Assess, &story.id, &issue.issue_id, CheckpointStatus::Done, None)?;
        Ok(assessment)
    }

    /// Runs the requested stages for one pair. LLM failures leave the pair
    /// pending; store failures abort.
    async fn process_pair(&self, stages: &[Stage], story: &UserStory, issue: &PreprocessedIssue) -> Result<(), PipelineError> {
        let m = if stages.contains(&Stage::Match) {
            self.match_pair(story, issue).await?
        } else {
            match self.store.get::<MatchRecord>(&pair_key(&story.id, &issue.issue_id))? {
                Some(m) => m,
                None => return Ok(()),
            }
        };
        if m.decision != 1 {
            return Ok(());
        }
        let c = if stages.contains(&Stage::Generate) {
            self.generate_criterion(story, issue).await?
        } else {
            match self.store.get::<GeneratedCriterion>(&criterion_id(&story.id, &issue.issue_id))? {
                Some(c) => c,
                None => return Ok(()),
            }
        };
        if !c.malformed && stages.contains(&Stage::Assess) {
            self.assess_criterion(story, &c, issue).await?;
        }
        Ok(())
    }

    /// Stories and issues of the sample.
    pub fn select(&self, spec: &SampleSpec) -> Result<(Vec<UserStory>, Vec<PreprocessedIssue>), PipelineError> {
        select_sample(&self.store, spec)
    }

    /// Translates non-English stories in place. Returns skipped stories with
    /// their reason and pass-through warnings.
    async fn prepare_stories(&self, stories: Vec<UserStory>) -> Result<(Vec<UserStory>, Vec<(String, String)>, Vec<String>), PipelineError> {
        let mut ready = Vec::with_capacity(stories.len());
        let mut skipped = Vec::new();
        let mut warnings = Vec::new();
        for story in stories {
            let id = story.id.clone();
            match translate(story, self.translator.as_deref()).await {
                Ok(out) => {
                    if out.translated {
                        self.store.put(&out.story)?;
                    }
                    warnings.extend(out.warning);
                    ready.push(out.story);
                }
                Err(e) => skipped.push((id, e.to_string())),
            }
        }
        Ok((ready, skipped, warnings))
    }

    pub async fn run_stages(&self, stages: &[Stage], spec: &SampleSpec) -> Result<RunReport, PipelineError> {
        let (stories, issues) = self.select(spec)?;
        let (stories, skipped, warnings) = self.prepare_stories(stories).await?;
        let pairs: Vec<(&UserStory, &PreprocessedIssue)> =
            stories.iter().flat_map(|s| issues.iter().map(move |i| (s, i))).collect();

        let mut results = stream::iter(pairs.iter().map(|(s, i)| self.process_pair(stages, s, i)))
            .buffer_unordered(self.concurrency);
        let mut failures = 0usize;
        while let Some(result) = results.next().await {
            match result {
                Ok(()) => {}
                Err(PipelineError::Store(e)) => return Err(PipelineError::Store(e)),
                Err(e) => {
                    failures += 1;
                    tracing::warn!(error = %e, "pair left pending");
                }
            }
        }
        drop(results);
        if failures > 0 {
            tracing::warn!(failures, "some pairs are pending; rerun to resume");
        }
        self.store.compact()?;
        let mut report = RunReport::collect(&self.store, &stories, &issues)?;
        report.skipped_stories = skipped;
        report.warnings = warnings;
        Ok(report)
    }

    /// Match, generate and assess every sampled pair.
    pub async fn run_pipeline(&self, spec: &SampleSpec) -> Result<RunReport, PipelineError> {
        self.run_stages(&Stage::ALL, spec).await
    }
}

/// Lookup helper used by the review service and reports.
pub fn story_criteria(store: &Store, story_id: &str) -> Result<Vec<GeneratedCriterion>, StoreError> {
    Ok(store
        .all::<GeneratedCriterion>()?
        .into_iter()
        .filter(|c| c.story_id == story_id)
        .collect())
}


/// Selects the stories and issues of a sample: both populations ordered by
/// key, shuffled with the seed (issues with `seed + 1`), first `n` taken.
/// Dropped issues are not part of the population.
pub fn select_sample(store: &Store, spec: &SampleSpec) -> Result<(Vec<UserStory>, Vec<PreprocessedIssue>), PipelineError> {
    let stories: Vec<UserStory> = store.all()?;
    let issues: Vec<PreprocessedIssue> = store.all::<PreprocessedIssue>()?.into_iter().filter(|i| !i.dropped).collect();
    let stories = match spec.story_count {
        Some(n) => sample(&stories, n, spec.seed)?,
        None => stories,
    };
    let issues = match spec.issue_count {
        Some(n) => sample(&issues, n, spec.seed.wrapping_add(1))?,
        None => issues,
    };
    Ok((stories, issues))
}
