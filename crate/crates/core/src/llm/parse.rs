use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryAnswer {
    Yes,
    No,
    Unparseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceLabel {
    Relevant,
    Irrelevant,
}

impl RelevanceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceLabel::Relevant => "relevant",
            RelevanceLabel::Irrelevant => "irrelevant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLabel {
    pub label: Option<RelevanceLabel>,
    pub explanation: String,
}

fn is_noise(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '«' | '»')
}

pub fn parse_binary(raw: &str) -> BinaryAnswer {
    match raw.trim_matches(is_noise).to_lowercase().as_str() {
        "yes" => BinaryAnswer::Yes,
        "no" => BinaryAnswer::No,
        _ => BinaryAnswer::Unparseable,
    }
}

static LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(irrelevant|relevant)\b").unwrap());

/// The first whole-word label decides; the text after it is the explanation
/// (or the text before it when nothing follows).
pub fn parse_label(raw: &str) -> ParsedLabel {
    let Some(m) = LABEL.find(raw) else {
        return ParsedLabel {
            label: None,
            explanation: raw.trim().to_string(),
        };
    };
    let label = if m.as_str().eq_ignore_ascii_case("relevant") {
        RelevanceLabel::Relevant
    } else {
        RelevanceLabel::Irrelevant
    };
    let strip = |s: &str| {
        s.trim_matches(|c: char| is_noise(c) || matches!(c, '—' | '–'))
            .to_string()
    };
    let mut explanation = raw[m.end()..]
        .trim_start_matches(|c: char| is_noise(c) || matches!(c, '—' | '–'))
        .trim_end()
        .to_string();
    if explanation.is_empty() {
        explanation = strip(&raw[..m.start()]);
        if explanation.eq_ignore_ascii_case("label") {
            explanation.clear();
        }
    }
    ParsedLabel {
        label: Some(label),
        explanation,
    }
}
