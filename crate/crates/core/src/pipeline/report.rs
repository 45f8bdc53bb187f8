use std::fmt::Write as _;

use serde::Serialize;

use crate::llm::RelevanceLabel;
use crate::preprocess::PreprocessedIssue;
use crate::store::{Store, StoreError};

use super::types::{criterion_id, pair_key, GeneratedCriterion, MatchRecord, RelevanceAssessment, UserStory};

/// Histogram bucket labels for generated criteria per story.
pub const HISTOGRAM_BUCKETS: [&str; 6] = ["0", "<=10", "<=20", "<=30", "<=50", ">50"];

pub fn histogram_bucket(n: usize) -> usize {
    match n {
        0 => 0,
        1..=10 => 1,
        11..=20 => 2,
        21..=30 => 3,
        31..=50 => 4,
        _ => 5,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StoryRow {
    pub story_id: String,
    pub pairs: usize,
    pub matches: usize,
    pub generated: usize,
    pub malformed: usize,
    pub relevant: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub stories: usize,
    pub issues: usize,
    pub pairs_evaluated: usize,
    pub matches: usize,
    /// Well-formed criteria.
    pub generated: usize,
    pub malformed: usize,
    pub relevant: usize,
    pub irrelevant: usize,
    /// Pairs whose chain of stages is incomplete.
    pub pending: usize,
    pub per_story: Vec<StoryRow>,
    /// Story counts per bucket of `HISTOGRAM_BUCKETS`.
    pub histogram: [usize; 6],
    pub skipped_stories: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl RunReport {
    /// Counts derived from the store for the given sample.
    pub fn collect(store: &Store, stories: &[UserStory], issues: &[PreprocessedIssue]) -> Result<RunReport, StoreError> {
        let mut report = RunReport {
            stories: stories.len(),
            issues: issues.len(),
            ..Default::default()
        };
        for story in stories {
            let mut row = StoryRow {
                story_id: story.id.clone(),
                pairs: issues.len(),
                ..Default::default()
            };
            for issue in issues {
                let Some(m) = store.get::<MatchRecord>(&pair_key(&story.id, &issue.issue_id))? else {
                    report.pending += 1;
                    continue;
                };
                report.pairs_evaluated += 1;
                if m.decision != 1 {
                    continue;
                }
                row.matches += 1;
                let id = criterion_id(&story.id, &issue.issue_id);
                let Some(c) = store.get::<GeneratedCriterion>(&id)? else {
                    report.pending += 1;
                    continue;
                };
                if c.malformed {
                    row.malformed += 1;
                    continue;
                }
                row.generated += 1;
                match store.get::<RelevanceAssessment>(&id)? {
                    None => report.pending += 1,
                    Some(a) if a.label == RelevanceLabel::Relevant => row.relevant += 1,
                    Some(_) => report.irrelevant += 1,
                }
            }
            report.matches += row.matches;
            report.generated += row.generated;
            report.malformed += row.malformed;
            report.relevant += row.relevant;
            report.histogram[histogram_bucket(row.generated)] += 1;
            report.per_story.push(row);
        }
        Ok(report)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, value) in [
            ("stories", self.stories),
            ("issues", self.issues),
            ("pairs evaluated", self.pairs_evaluated),
            ("matches", self.matches),
            ("criteria generated", self.generated),
            ("malformed", self.malformed),
            ("relevant", self.relevant),
            ("irrelevant", self.irrelevant),
            ("pending", self.pending),
        ] {
            let _ = writeln!(out, "{name:<20}{value:>8}");
        }
        let _ = writeln!(out);
        let id_width = self.per_story.iter().map(|r| r.story_id.len()).max().unwrap_or(0).max(5);
        let _ = writeln!(
            out,
            "{:<id_width$}  {:>7}  {:>9}  {:>9}  {:>9}  {:>8}",
            "story", "matches", "generated", "malformed", "relevant", "pairs"
        );
        for r in &self.per_story {
            let _ = writeln!(
                out,
                "{:<id_width$}  {:>7}  {:>9}  {:>9}  {:>9}  {:>8}",
                r.story_id, r.matches, r.generated, r.malformed, r.relevant, r.pairs
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12}{:>8}", "AC per story", "stories");
        for (label, n) in HISTOGRAM_BUCKETS.iter().zip(self.histogram) {
            let _ = writeln!(out, "{label:<12}{n:>8}");
        }
        for (id, reason) in &self.skipped_stories {
            let _ = writeln!(out, "skipped {id}: {reason}");
        }
        out
    }

    /// Per-story rows as CSV, then the histogram as `bucket,stories` rows.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["story_id", "pairs", "matches", "generated", "malformed", "relevant"])?;
        for r in &self.per_story {
            w.write_record([
                r.story_id.clone(),
                r.pairs.to_string(),
                r.matches.to_string(),
                r.generated.to_string(),
                r.malformed.to_string(),
                r.relevant.to_string(),
            ])?;
        }
        let mut out = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8");
        out.push('\n');
        let mut h = csv::Writer::from_writer(Vec::new());
        h.write_record(["bucket", "stories"])?;
        for (label, n) in HISTOGRAM_BUCKETS.iter().zip(self.histogram) {
            h.write_record([label.to_string(), n.to_string()])?;
        }
        out.push_str(&String::from_utf8(h.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"));
        Ok(out)
    }
}
