use std::collections::HashSet;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectedLanguage {
    English,
    Other,
}

pub trait LanguageDetector: Send + Sync {
    fn detect(&self, text: &str) -> DetectedLanguage;
}

const STOPWORDS: [&str; 100] = [
    "a", "about", "after", "again", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each",
    "few", "for", "from", "had", "has", "have", "having", "he", "her", "here",
    "him", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "just", "me", "more", "most", "my", "no", "not", "of", "off", "on",
    "once", "only", "or", "other", "our", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "them", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "up",
    "very", "was", "we", "were", "what", "when", "where", "which", "who", "with",
];

static STOPWORD_SET: LazyLock<HashSet<&'static str>> = LazyLock::new(|| STOPWORDS.into_iter().collect());

/// English when at least `min_stopwords` distinct English stopwords occur and
/// at least `min_ascii_ratio` of the characters are ASCII.
#[derive(Debug, Clone, Copy)]
pub struct StopwordDetector {
    pub min_stopwords: usize,
    pub min_ascii_ratio: f64,
}

impl Default for StopwordDetector {
    fn default() -> Self {
        StopwordDetector {
            min_stopwords: 2,
            min_ascii_ratio: 0.9,
        }
    }
}

impl LanguageDetector for StopwordDetector {
    fn detect(&self, text: &str) -> DetectedLanguage {
        let total = text.chars().count();
        if total == 0 {
            return DetectedLanguage::Other;
        }
        let ascii = text.chars().filter(char::is_ascii).count();
        if (ascii as f64) < self.min_ascii_ratio * total as f64 {
            return DetectedLanguage::Other;
        }
        let lower = text.to_lowercase();
        let found: HashSet<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter_map(|w| STOPWORD_SET.get(w).copied())
            .collect();
        if found.len() >= self.min_stopwords {
            DetectedLanguage::English
        } else {
            DetectedLanguage::Other
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_has_no_duplicates() {
        assert_eq!(STOPWORD_SET.len(), 100);
    }

    #[test]
    fn detects() {
        let d = StopwordDetector::default();
        assert_eq!(d.detect("Der Warenkorb ist leer"), DetectedLanguage::Other);
        assert_eq!(
            d.detect("The cart total is wrong after applying a coupon"),
            DetectedLanguage::English
        );
        assert_eq!(d.detect(""), DetectedLanguage::Other);
        assert_eq!(d.detect("the the the"), DetectedLanguage::Other);
        assert_eq!(d.detect("购物车 is 空的 and 错误的 总数"), DetectedLanguage::Other);
    }
}
