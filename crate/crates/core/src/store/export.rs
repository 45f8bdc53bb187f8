//! CSV and JSON-lines export of every entity, CSV import of user stories.
//!
//! CSV columns per entity follow `Record::CSV_COLUMNS`. User stories use
//! `id, project, text, acceptance_criteria, language` with criteria joined
//! by `‖`; that layout is also the import format.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::{Entity, Record, RunCheckpoint, Store, StoreError};
use crate::ingest::RawIssue;
use crate::pipeline::{GeneratedCriterion, Language, MatchRecord, RelevanceAssessment, UserStory, CRITERIA_SEPARATOR};
use crate::preprocess::PreprocessedIssue;
use crate::review::ReviewDecision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" | "json-lines" | "ndjson" => Ok(ExportFormat::Jsonl),
            other => Err(format!("unknown export format {other:?} (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub imported: usize,
    pub rejected: Vec<RejectedRow>,
}

const STORY_COLUMNS: [&str; 5] = ["id", "project", "text", "acceptance_criteria", "language"];

impl Store {
    /// Writes every record of `entity` to `path`; returns the record count.
    pub fn export(&self, entity: Entity, format: ExportFormat, path: &Path) -> Result<usize, StoreError> {
        let file = File::create(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut out = BufWriter::new(file);
        let count = self.export_to(entity, format, &mut out)?;
        out.flush().map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(count)
    }

    pub fn export_to<W: Write>(&self, entity: Entity, format: ExportFormat, out: W) -> Result<usize, StoreError> {
        match format {
            ExportFormat::Jsonl => self.export_jsonl(entity, out),
            ExportFormat::Csv => match entity {
                Entity::RawIssues => self.export_csv::<RawIssue, W>(out),
                Entity::PreprocessedIssues => self.export_csv::<PreprocessedIssue, W>(out),
                Entity::UserStories => self.export_csv::<UserStory, W>(out),
                Entity::MatchRecords => self.export_csv::<MatchRecord, W>(out),
                Entity::Criteria => self.export_csv::<GeneratedCriterion, W>(out),
                Entity::Assessments => self.export_csv::<RelevanceAssessment, W>(out),
                Entity::ReviewDecisions => self.export_csv::<ReviewDecision, W>(out),
                Entity::RunCheckpoints => self.export_csv::<RunCheckpoint, W>(out),
            },
        }
    }

    fn export_jsonl<W: Write>(&self, entity: Entity, mut out: W) -> Result<usize, StoreError> {
        let records = self.raw_records(entity);
        for r in &records {
            writeln!(out, "{r}").map_err(|source| StoreError::Io {
                path: entity.name().into(),
                source,
            })?;
        }
        Ok(records.len())
    }

    fn export_csv<R: Record, W: Write>(&self, out: W) -> Result<usize, StoreError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(R::CSV_COLUMNS)?;
        let records: Vec<R> = self.all()?;
        for r in &records {
            w.write_record(r.csv_row())?;
        }
        w.flush().map_err(|source| StoreError::Io {
            path: R::ENTITY.name().into(),
            source,
        })?;
        Ok(records.len())
    }

    /// Upserts stories from a CSV file; malformed rows are reported, not fatal.
    pub fn import_user_stories(&self, path: &Path) -> Result<ImportReport, StoreError> {
        let file = File::open(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.import_user_stories_from(file)
    }

    pub fn import_user_stories_from<R: Read>(&self, input: R) -> Result<ImportReport, StoreError> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let headers = reader.headers()?.clone();
        let mut index = [0usize; 5];
        for (slot, col) in index.iter_mut().zip(STORY_COLUMNS) {
            *slot = headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(col))
                .ok_or_else(|| StoreError::Corrupt {
                    file: "user story import".into(),
                    line: 1,
                    reason: format!("missing column {col}"),
                })?;
        }
        let mut report = ImportReport::default();
        for row in reader.records() {
            let row = match row {
                Ok(row) => row,
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    report.rejected.push(RejectedRow {
                        line,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != headers.len() {
                report.rejected.push(RejectedRow {
                    line,
                    reason: format!("expected {} fields, found {}", headers.len(), row.len()),
                });
                continue;
            }
            let field = |i: usize| row.get(index[i]).unwrap_or("");
            let criteria = field(3)
                .split(CRITERIA_SEPARATOR)
                .map(str::to_string)
                .collect();
            match UserStory::new(field(0).trim(), field(1).trim(), field(2).trim(), criteria, Language::parse(field(4))) {
                Ok(story) => {
                    self.put(&story)?;
                    report.imported += 1;
                }
                Err(e) => report.rejected.push(RejectedRow {
                    line,
                    reason: e.to_string(),
                }),
            }
        }
        Ok(report)
    }
}
