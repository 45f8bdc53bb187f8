use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Match,
    Generate,
    Assess,
}

impl PromptKind {
    pub const ALL: [PromptKind; 3] = [PromptKind::Match, PromptKind::Generate, PromptKind::Assess];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Match => "match",
            PromptKind::Generate => "generate",
            PromptKind::Assess => "assess",
        }
    }

    pub fn mandatory(self) -> &'static [Placeholder] {
        use Placeholder::*;
        match self {
            PromptKind::Match => &[DomainDescription, UserStory, Issue],
            PromptKind::Generate => &[Issue, UserStory],
            PromptKind::Assess => &[UserStory, AcceptanceCriteria, NewCriterion, Issue],
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placeholder {
    DomainDescription,
    UserStory,
    Issue,
    AcceptanceCriteria,
    NewCriterion,
}

impl Placeholder {
    pub const ALL: [Placeholder; 5] = [
        Placeholder::DomainDescription,
        Placeholder::UserStory,
        Placeholder::Issue,
        Placeholder::AcceptanceCriteria,
        Placeholder::NewCriterion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::DomainDescription => "domain_description",
            Placeholder::UserStory => "user_story",
            Placeholder::Issue => "issue",
            Placeholder::AcceptanceCriteria => "acceptance_criteria",
            Placeholder::NewCriterion => "new_criterion",
        }
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Placeholder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Placeholder::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown placeholder {s:?}"))
    }
}

pub type Placeholders = BTreeMap<Placeholder, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub kind: PromptKind,
    pub rendered: String,
    pub placeholders: Placeholders,
}

impl PromptInstance {
    /// The same prompt with an extra instruction appended, used for re-asks.
    pub fn with_suffix(&self, instruction: &str) -> PromptInstance {
        PromptInstance {
            kind: self.kind,
            rendered: format!("{}\n\n{}", self.rendered, instruction),
            placeholders: self.placeholders.clone(),
        }
    }

    pub fn get(&self, p: Placeholder) -> Option<&str> {
        self.placeholders.get(&p).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(Placeholder),
}

/// A parsed template: literal text interleaved with `{{name}}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pieces: Vec<Piece>,
}

impl FromStr for Template {
    type Err = LlmError;

    fn from_str(src: &str) -> Result<Self, Self::Err> {
        let mut pieces = Vec::new();
        let mut rest = src;
        while let Some(start) = rest.find("{{") {
            let Some(len) = rest[start + 2..].find("}}") else {
                return Err(LlmError::Template("unclosed {{".into()));
            };
            let name = rest[start + 2..start + 2 + len].trim();
            let slot = name.parse().map_err(LlmError::Template)?;
            if start > 0 {
                pieces.push(Piece::Text(rest[..start].to_string()));
            }
            pieces.push(Piece::Slot(slot));
            rest = &rest[start + 2 + len + 2..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(Template { pieces })
    }
}

impl Template {
    fn render(&self, values: &Placeholders) -> String {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(p) => out.push_str(values.get(p).map(String::as_str).unwrap_or("")),
            }
        }
        out
    }
}

/// The three prompt templates.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    match_: Template,
    generate: Template,
    assess: Template,
}

const MATCH_TXT: &str = include_str!("../../assets/prompts/match.txt");
const GENERATE_TXT: &str = include_str!("../../assets/prompts/generate.txt");
const ASSESS_TXT: &str = include_str!("../../assets/prompts/assess.txt");

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates::from_sources(MATCH_TXT, GENERATE_TXT, ASSESS_TXT).expect("bundled templates parse")
    }
}

impl PromptTemplates {
    pub fn from_sources(match_: &str, generate: &str, assess: &str) -> Result<Self, LlmError> {
        Ok(PromptTemplates {
            match_: match_.trim_end().parse()?,
            generate: generate.trim_end().parse()?,
            assess: assess.trim_end().parse()?,
        })
    }

    /// Loads `match.txt`, `generate.txt` and `assess.txt` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, LlmError> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| LlmError::Template(format!("{}: {e}", dir.join(name).display())))
        };
        Self::from_sources(&read("match.txt")?, &read("generate.txt")?, &read("assess.txt")?)
    }

    fn template(&self, kind: PromptKind) -> &Template {
        match kind {
            PromptKind::Match => &self.match_,
            PromptKind::Generate => &self.generate,
            PromptKind::Assess => &self.assess,
        }
    }

    pub fn render(&self, kind: PromptKind, placeholders: Placeholders) -> Result<PromptInstance, LlmError> {
        for p in kind.mandatory() {
            if placeholders.get(p).is_none_or(|v| v.trim().is_empty()) {
                return Err(LlmError::MissingPlaceholder { kind, placeholder: *p });
            }
        }
        let rendered = self.template(kind).render(&placeholders);
        Ok(PromptInstance {
            kind,
            rendered,
            placeholders,
        })
    }
}

/// Renders with the bundled templates.
pub fn render_prompt(kind: PromptKind, placeholders: Placeholders) -> Result<PromptInstance, LlmError> {
    PromptTemplates::default().render(kind, placeholders)
}
