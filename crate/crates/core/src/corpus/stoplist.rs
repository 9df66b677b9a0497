//! Stopword handling: a built-in English list plus a custom, possibly
//! multi-word, stoplist loaded from a config file.

use std::collections::HashSet;
use std::path::Path;

use super::tokenize::alnum_tokens;

/// Standard English function words.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "either", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "may", "me", "might", "more", "most", "must", "my", "myself", "no", "nor",
    "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves",
    "out", "over", "own", "same", "shall", "she", "should", "so", "some", "such", "than", "that",
    "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this",
    "those", "through", "to", "too", "under", "until", "up", "upon", "very", "was", "we", "were",
    "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would",
    "you", "your", "yours", "yourself", "yourselves", "s", "t", "also", "thereof", "therein",
    "wherein", "whereby", "via", "per",
];

/// Domain stoplist shipped as the default custom config.
pub const DEFAULT_CUSTOM_STOPLIST: &[&str] = &["regarding", "et al.", "office action"];

/// Compiled stoplist. Single-word entries are matched per token; multi-word
/// entries are matched as contiguous token sequences.
#[derive(Debug, Clone, Default)]
pub struct Stoplist {
    words: HashSet<String>,
    phrases: Vec<Vec<String>>,
}

impl Stoplist {
    /// Empty stoplist: no standard stopwords, no custom entries.
    pub fn empty() -> Self {
        Self::default()
    }

    /// English stopwords plus the shipped domain entries.
    pub fn standard() -> Self {
        Self::with_custom(DEFAULT_CUSTOM_STOPLIST)
    }

    /// Built-in English stopwords plus the given custom entries.
    pub fn with_custom<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list = Self::empty();
        list.words.extend(ENGLISH_STOPWORDS.iter().map(|w| w.to_string()));
        for entry in entries {
            list.add(entry.as_ref());
        }
        list
    }

    /// Parse a custom stoplist file body: one entry per line, `#` comments.
    pub fn parse_custom(body: &str) -> Self {
        Self::with_custom(parse_entry_lines(body))
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::parse_custom(&std::fs::read_to_string(path)?))
    }

    pub fn add(&mut self, entry: &str) {
        let toks = alnum_tokens(&entry.to_lowercase());
        match toks.len() {
            0 => {}
            1 => {
                self.words.insert(toks.into_iter().next().unwrap());
            }
            _ => {
                if !self.phrases.contains(&toks) {
                    self.phrases.push(toks);
                }
            }
        }
    }

    pub fn remove_word(&mut self, word: &str) {
        self.words.remove(&word.to_lowercase());
    }

    pub fn contains_word(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn phrases(&self) -> &[Vec<String>] {
        &self.phrases
    }
}

/// Lines of a one-entry-per-line config file with `#` comments stripped.
pub fn parse_entry_lines(body: &str) -> Vec<String> {
    body.lines()
        .map(|line| match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        })
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}
