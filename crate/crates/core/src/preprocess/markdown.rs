//! Markdown noise removal: code, unneeded sections, links, comments and
//! repeated sentences. Every rule only deletes text.

use std::collections::{BTreeSet, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Section headings dropped together with their body by default.
pub const DEFAULT_DROP_SECTIONS: [&str; 6] = [
    "environment",
    "steps to reproduce",
    "system status report",
    "current result",
    "versions",
    "stack trace",
];

/// Label-style headings ("Expected result:") that delimit sections even
/// though they are not dropped.
const KNOWN_LABELS: [&str; 16] = [
    "description",
    "summary",
    "expected result",
    "expected results",
    "expected behavior",
    "expected behaviour",
    "actual result",
    "actual behavior",
    "actual behaviour",
    "additional context",
    "additional information",
    "preconditions",
    "problem",
    "proposed solution",
    "how to reproduce",
    "reproduction steps",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalStats {
    pub sections_removed: usize,
    pub code_blocks_removed: usize,
    pub urls_removed: usize,
    pub html_comments_removed: usize,
    pub duplicate_sentences_removed: usize,
    pub trivia_lines_removed: usize,
}

static HTML_COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?(?:-->|\z)").unwrap());
static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(`{3,}|~{3,})").unwrap());
static ATX_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*#{1,6}\s+(.*?)\s*#*\s*$").unwrap());
static BOLD_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\*\*([^*]+?)\*\*\s*:?\s*$").unwrap());
static LABEL_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\*\*)?([A-Za-z][A-Za-z0-9 /&()-]{0,40}?)(?:\*\*)?\s*:").unwrap());
static LIST_ITEM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*+]|\d+[.)])\s").unwrap());
static IMAGE_LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"!\[[^\]]*\]\([^)]*\)").unwrap());
static MD_LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[([^\]]*)\]\((?:https?://|www\.)[^)]*\)").unwrap());
static AUTOLINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<(?:https?://|www\.)[^>\s]*>").unwrap());
static BARE_URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:https?://|www\.)[^\s<>()\[\]]+").unwrap());
static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.?!]+(?:\s+|$)").unwrap());
static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[ \t]+").unwrap());

#[derive(Debug, Clone)]
pub struct MarkdownCleaner {
    drop_sections: BTreeSet<String>,
}

impl Default for MarkdownCleaner {
    fn default() -> Self {
        Self::new(DEFAULT_DROP_SECTIONS)
    }
}

fn normalize_title(title: &str) -> String {
    let t = title.trim().trim_end_matches([':', '*']).trim();
    SPACES.replace_all(t, " ").to_lowercase()
}

impl MarkdownCleaner {
    pub fn new<I, S>(drop_sections: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        MarkdownCleaner {
            drop_sections: drop_sections
                .into_iter()
                .map(|s| normalize_title(s.as_ref()))
                .collect(),
        }
    }

    fn is_dropped(&self, title: &str) -> bool {
        let t = normalize_title(title);
        self.drop_sections.iter().any(|d| {
            t == *d
                || t.strip_prefix(d.as_str())
                    .and_then(|rest| rest.chars().next())
                    .is_some_and(|c| !c.is_alphanumeric())
        })
    }

    /// Title of the section this line opens, if it is a heading.
    fn heading_title<'a>(&self, line: &'a str) -> Option<&'a str> {
        if let Some(c) = ATX_HEADING.captures(line) {
            return Some(c.get(1).unwrap().as_str());
        }
        if let Some(c) = BOLD_HEADING.captures(line) {
            return Some(c.get(1).unwrap().as_str());
        }
        if let Some(c) = LABEL_LINE.captures(line) {
            let label = c.get(1).unwrap().as_str();
            let norm = normalize_title(label);
            if self.is_dropped(label) || KNOWN_LABELS.contains(&norm.as_str()) {
                return Some(label);
            }
        }
        None
    }

    pub fn strip(&self, body: &str) -> (String, RemovalStats) {
        let mut stats = RemovalStats::default();

        let body = body.replace("\r\n", "\n");
        stats.html_comments_removed = HTML_COMMENT.find_iter(&body).count();
        let body = HTML_COMMENT.replace_all(&body, "");

        let lines = remove_fenced_code(body.lines(), &mut stats);
        let lines = remove_indented_code(lines, &mut stats);
        let lines: Vec<String> = lines
            .into_iter()
            .map(|l| remove_links(&l, &mut stats))
            .collect();

        let mut kept = Vec::new();
        let mut dropping = false;
        for line in lines {
            match self.heading_title(&line) {
                Some(title) if self.is_dropped(title) => {
                    dropping = true;
                    stats.sections_removed += 1;
                }
                Some(_) => {
                    dropping = false;
                    // kept headings lose their markup, not their words
                    let line = match ATX_HEADING.captures(&line) {
                        Some(c) => c.get(1).unwrap().as_str().to_string(),
                        None => line.replace("**", ""),
                    };
                    kept.push(line);
                }
                None if !dropping => kept.push(line),
                None => {}
            }
        }

        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for line in kept {
            let line = remove_duplicate_sentences(&line, &mut seen, &mut stats);
            let line = SPACES.replace_all(line.trim(), " ").to_string();
            if !line.is_empty() {
                out.push(line);
            }
        }
        (out.join("\n"), stats)
    }
}

/// Strips markdown noise with the default section drop list.
pub fn strip_markdown(body: &str) -> (String, RemovalStats) {
    MarkdownCleaner::default().strip(body)
}

fn remove_fenced_code<'a>(lines: impl Iterator<Item = &'a str>, stats: &mut RemovalStats) -> Vec<String> {
    let mut out = Vec::new();
    let mut open: Option<(char, usize)> = None;
    for line in lines {
        match open {
            None => {
                if let Some(c) = FENCE.captures(line) {
                    let fence = c.get(1).unwrap().as_str();
                    open = Some((fence.chars().next().unwrap(), fence.len()));
                    stats.code_blocks_removed += 1;
                } else {
                    out.push(line.to_string());
                }
            }
            Some((ch, len)) => {
                let t = line.trim();
                let run = t.chars().take_while(|c| *c == ch).count();
                if run >= len && t[run * ch.len_utf8()..].trim().is_empty() {
                    open = None;
                }
            }
        }
    }
    out
}

fn is_indented(line: &str) -> bool {
    line.starts_with("    ") || line.starts_with('\t')
}

fn remove_indented_code(lines: Vec<String>, stats: &mut RemovalStats) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        let prev_blank = i == 0 || lines[i - 1].trim().is_empty();
        let in_list = out
            .iter()
            .rev()
            .find(|l| !l.trim().is_empty())
            .is_some_and(|l| LIST_ITEM.is_match(l) || is_indented(l));
        if is_indented(line) && !line.trim().is_empty() && prev_blank && !in_list {
            stats.code_blocks_removed += 1;
            // the block runs through indented lines and interior blank lines
            let mut j = i;
            while j < lines.len() {
                let continues = if lines[j].trim().is_empty() {
                    lines[j + 1..]
                        .iter()
                        .find(|l| !l.trim().is_empty())
                        .is_some_and(|l| is_indented(l))
                } else {
                    is_indented(&lines[j])
                };
                if !continues {
                    break;
                }
                j += 1;
            }
            i = j;
            continue;
        }
        out.push(line.clone());
        i += 1;
    }
    out
}

fn remove_links(line: &str, stats: &mut RemovalStats) -> String {
    let mut count = IMAGE_LINK.find_iter(line).count();
    let line = IMAGE_LINK.replace_all(line, "");
    count += MD_LINK.find_iter(&line).count();
    let line = MD_LINK.replace_all(&line, "$1");
    count += AUTOLINK.find_iter(&line).count();
    let line = AUTOLINK.replace_all(&line, "");
    count += BARE_URL.find_iter(&line).count();
    let line = BARE_URL.replace_all(&line, "");
    stats.urls_removed += count;
    line.into_owned()
}

fn normalize_sentence(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Splits on `.`, `?` or `!` followed by whitespace or line end and drops
/// sentences already seen in this issue.
fn remove_duplicate_sentences(
    line: &str,
    seen: &mut HashSet<String>,
    stats: &mut RemovalStats,
) -> String {
    let mut out = String::with_capacity(line.len());
    let mut start = 0;
    let mut push = |segment: &str, out: &mut String| {
        let norm = normalize_sentence(segment);
        if norm.is_empty() || seen.insert(norm) {
            out.push_str(segment);
        } else {
            stats.duplicate_sentences_removed += 1;
        }
    };
    for m in SENTENCE_END.find_iter(line) {
        push(&line[start..m.end()], &mut out);
        start = m.end();
    }
    if start < line.len() {
        push(&line[start..], &mut out);
    }
    out
}
