//! GIVEN-WHEN-THEN scenario parsing and canonical serialization.
//!
//! The parser is deliberately forgiving about the text surrounding a
//! scenario (model chatter, code fences, trailing explanations) but strict
//! about the scenario itself: all three keyword groups must be present and
//! no step may appear before the first GIVEN.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Maximum title length (in chars) when the title has to be derived from the
/// first line of text.
pub const DERIVED_TITLE_MAX_CHARS: usize = 120;

static SCENARIO_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:#+\s*)?(?:\*\*)?scenario(?:\*\*)?\s*:(?:\*\*)?(.*)$").unwrap()
});

static STEP_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:[-*]\s+)?(?:\*\*)?(given|when|then|and|but)(?:\*\*)?(?:\s*:)?(?:\s+(.*))?$")
        .unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GherkinScenario {
    pub title: String,
    pub given: Vec<String>,
    pub when: Vec<String>,
    pub then: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepGroup {
    Given,
    When,
    Then,
}

impl fmt::Display for StepGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepGroup::Given => "GIVEN",
            StepGroup::When => "WHEN",
            StepGroup::Then => "THEN",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GherkinError {
    #[error("missing {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    Missing(Vec<StepGroup>),
    #[error("line {line}: step appears before the first GIVEN")]
    StepBeforeGiven { line: usize },
    #[error("line {line}: step has no text")]
    EmptyStep { line: usize },
    #[error("scenario title is empty")]
    EmptyTitle,
}

impl GherkinScenario {
    /// Checks the structural invariants: nonempty title and nonempty,
    /// single-line, trimmed steps in each group.
    pub fn validate(&self) -> Result<(), GherkinError> {
        if self.title.trim().is_empty() {
            return Err(GherkinError::EmptyTitle);
        }
        let missing: Vec<StepGroup> = [
            (StepGroup::Given, &self.given),
            (StepGroup::When, &self.when),
            (StepGroup::Then, &self.then),
        ]
        .into_iter()
        .filter(|(_, steps)| steps.is_empty())
        .map(|(g, _)| g)
        .collect();
        if !missing.is_empty() {
            return Err(GherkinError::Missing(missing));
        }
        for step in self.given.iter().chain(&self.when).chain(&self.then) {
            if step.trim().is_empty() {
                return Err(GherkinError::EmptyStep { line: 0 });
            }
        }
        Ok(())
    }
}

fn strip_bold(s: &str) -> &str {
    let s = s.trim();
    let s = s.strip_prefix("**").unwrap_or(s);
    s.strip_suffix("**").unwrap_or(s).trim()
}

/// Parses the first scenario found in `raw`.
pub fn parse(raw: &str) -> Result<GherkinScenario, GherkinError> {
    let lines: Vec<&str> = raw.lines().collect();

    let scenario_start = lines.iter().position(|l| SCENARIO_LINE.is_match(l));
    let (title, body_start) = match scenario_start {
        Some(idx) => {
            let caps = SCENARIO_LINE.captures(lines[idx]).unwrap();
            let title = strip_bold(caps.get(1).map_or("", |m| m.as_str())).to_string();
            if title.is_empty() {
                return Err(GherkinError::EmptyTitle);
            }
            (title, idx + 1)
        }
        None => {
            let first = lines.iter().map(|l| l.trim()).find(|l| !l.is_empty());
            let title: String = first
                .map(|l| l.chars().take(DERIVED_TITLE_MAX_CHARS).collect::<String>())
                .unwrap_or_default();
            (title.trim().to_string(), 0)
        }
    };

    let mut given = Vec::new();
    let mut when = Vec::new();
    let mut then = Vec::new();
    let mut current: Option<StepGroup> = None;

    for (offset, line) in lines[body_start..].iter().enumerate() {
        let line_no = body_start + offset + 1;
        // only the first scenario is taken
        if scenario_start.is_some() && SCENARIO_LINE.is_match(line) {
            break;
        }
        let Some(caps) = STEP_LINE.captures(line) else {
            continue;
        };
        let keyword = caps[1].to_ascii_lowercase();
        let text = caps.get(2).map_or("", |m| m.as_str()).trim().to_string();
        let group = match keyword.as_str() {
            "given" => StepGroup::Given,
            "when" => StepGroup::When,
            "then" => StepGroup::Then,
            _ => match current {
                Some(g) => g,
                None => return Err(GherkinError::StepBeforeGiven { line: line_no }),
            },
        };
        if current.is_none() && group != StepGroup::Given {
            return Err(GherkinError::StepBeforeGiven { line: line_no });
        }
        if text.is_empty() {
            return Err(GherkinError::EmptyStep { line: line_no });
        }
        current = Some(group);
        match group {
            StepGroup::Given => given.push(text),
            StepGroup::When => when.push(text),
            StepGroup::Then => then.push(text),
        }
    }

    let scenario = GherkinScenario {
        title,
        given,
        when,
        then,
    };
    if scenario.title.is_empty() && scenario.given.is_empty() {
        // nothing at all: report the missing groups rather than the title
        return Err(GherkinError::Missing(vec![
            StepGroup::Given,
            StepGroup::When,
            StepGroup::Then,
        ]));
    }
    scenario.validate()?;
    Ok(scenario)
}

/// Canonical layout: the title line, then one step per line with the first
/// step of each group keyworded and continuations prefixed `AND`.
pub fn serialize(scenario: &GherkinScenario) -> String {
    let mut out = format!("Scenario: {}\n", scenario.title);
    for (group, steps) in [
        (StepGroup::Given, &scenario.given),
        (StepGroup::When, &scenario.when),
        (StepGroup::Then, &scenario.then),
    ] {
        for (i, step) in steps.iter().enumerate() {
            if i == 0 {
                out.push_str(&format!("{group} {step}\n"));
            } else {
                out.push_str(&format!("AND {step}\n"));
            }
        }
    }
    out
}

impl fmt::Display for GherkinScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}
