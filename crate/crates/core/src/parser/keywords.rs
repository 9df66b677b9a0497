//! Technical keyword extraction over the current patent and prior art.
//!
//! Part-of-speech tagging is approximated: a phrase is a maximal run of
//! content tokens, trimmed at both ends until it starts and ends on a
//! noun-like token.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{parse_entry_lines, Stoplist};

/// Patent boilerplate and general vocabulary that never names a component
/// on its own. Keep-list entries override this list.
pub const PATENT_BOILERPLATE: &[&str] = &[
    "plurality", "said", "first", "second", "third", "fourth", "fifth", "comprising", "comprises",
    "comprise", "comprised", "consisting", "consists", "including", "includes", "include",
    "having", "claim", "claims", "claimed", "embodiment", "embodiments", "fig", "figs", "figure",
    "figures", "invention", "present", "least", "one", "two", "three", "respectively", "according",
    "based", "another", "thereto", "therefrom", "herein", "wherein", "configured", "example",
    "examples", "use", "used", "using", "die", "may", "can", "e", "g", "ie", "i", "etc",
    "direction", "directions", "teaches", "discloses", "disclosed", "shown",
];

/// Patent terms that must survive the stoplists and count as nouns.
pub const DEFAULT_KEEP_LIST: &[&str] = &[
    "die", "dies", "housing", "bearing", "coating", "wiring", "spring", "ring", "string", "opening",
    "cladding", "lining", "fitting", "casting", "bonding", "packaging", "bushing", "shielding",
];

const NON_NOUN_SUFFIXES: &[&str] = &["ly", "ed", "ing", "ous", "ive", "able", "ible", "ful", "less", "ize", "ise"];
/// Characters a stem must keep after the suffix, so "bed" or "ring" stay nouns.
const MIN_STEM: usize = 3;
const MAX_PHRASE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhraseSource {
    CurrentPatent,
    PriorArt,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub phrase: String,
    pub score: f64,
    pub source: PhraseSource,
}

/// Ranked by descending score, ties broken by phrase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TechKeywords {
    pub keywords: Vec<Keyword>,
}

impl TechKeywords {
    /// Best phrase whose source is acceptable to `want`. `Both` phrases match
    /// any request.
    pub fn top(&self, want: Option<PhraseSource>) -> Option<&Keyword> {
        self.keywords.iter().find(|k| match want {
            None => true,
            Some(w) => k.source == w || k.source == PhraseSource::Both,
        })
    }

    pub fn top_shared(&self) -> Option<&Keyword> {
        self.keywords.iter().find(|k| k.source == PhraseSource::Both)
    }
}

/// One patent document: its description and, when known, its claims.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KeywordDoc {
    pub text: String,
    pub claims: Option<String>,
}

impl KeywordDoc {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), claims: None }
    }

    pub fn with_claims(text: impl Into<String>, claims: impl Into<String>) -> Self {
        Self { text: text.into(), claims: Some(claims.into()) }
    }
}

#[derive(Debug, Clone)]
pub struct KeywordConfig {
    pub stoplist: Stoplist,
    pub boilerplate: HashSet<String>,
    pub keep: HashSet<String>,
    pub claims_boost: f64,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        Self {
            stoplist: Stoplist::standard(),
            boilerplate: PATENT_BOILERPLATE.iter().map(|s| s.to_string()).collect(),
            keep: DEFAULT_KEEP_LIST.iter().map(|s| s.to_string()).collect(),
            claims_boost: 2.0,
        }
    }
}

impl KeywordConfig {
    /// Adds keep-list entries from a one-per-line file body (`#` comments allowed).
    pub fn with_keep_lines(mut self, body: &str) -> Self {
        self.keep.extend(parse_entry_lines(body).into_iter().map(|s| s.to_lowercase()));
        self
    }

    fn is_content(&self, token: &str) -> bool {
        if self.keep.contains(token) {
            return true;
        }
        token.chars().count() > 1
            && !token.chars().all(|c| c.is_numeric())
            && !self.stoplist.contains_word(token)
            && !self.boilerplate.contains(token)
    }

    fn is_noun_like(&self, token: &str) -> bool {
        if self.keep.contains(token) {
            return true;
        }
        !NON_NOUN_SUFFIXES
            .iter()
            .any(|s| token.len() >= s.len() + MIN_STEM && token.ends_with(s))
    }

    /// Candidate phrases of one text, in order of occurrence.
    pub fn phrases(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let mut out = Vec::new();
        // punctuation other than intra-word hyphens ends a run
        for clause in lower.split(|c: char| !(c.is_alphanumeric() || c.is_whitespace() || c == '-')) {
            let mut run: Vec<&str> = Vec::new();
            for tok in clause.split_whitespace().map(|t| t.trim_matches('-')) {
                if !tok.is_empty() && self.is_content(tok) {
                    run.push(tok);
                } else {
                    self.flush(&mut run, &mut out);
                }
            }
            self.flush(&mut run, &mut out);
        }
        out
    }

    fn flush(&self, run: &mut Vec<&str>, out: &mut Vec<String>) {
        let mut lo = 0;
        let mut hi = run.len();
        while lo < hi && !self.is_noun_like(run[lo]) {
            lo += 1;
        }
        while hi > lo && !self.is_noun_like(run[hi - 1]) {
            hi -= 1;
        }
        if lo < hi {
            let start = hi.saturating_sub(MAX_PHRASE).max(lo);
            out.push(run[start..hi].join(" "));
        }
        run.clear();
    }
}

#[derive(Default)]
struct Tally {
    count: usize,
    in_claims: bool,
    current: bool,
    prior: bool,
}

/// Rank phrases by frequency, boosted when a phrase occurs in any claims.
pub fn extract_tech_keywords(current: &KeywordDoc, prior: &[KeywordDoc], config: &KeywordConfig) -> TechKeywords {
    let mut tally: BTreeMap<String, Tally> = BTreeMap::new();
    let docs = std::iter::once((current, true)).chain(prior.iter().map(|d| (d, false)));
    for (doc, is_current) in docs {
        let mut seen = BTreeSet::new();
        let mut record = |phrase: String, claims: bool| {
            let t = tally.entry(phrase.clone()).or_default();
            t.count += 1;
            t.in_claims |= claims;
            seen.insert(phrase);
        };
        for p in config.phrases(&doc.text) {
            record(p, false);
        }
        if let Some(claims) = &doc.claims {
            for p in config.phrases(claims) {
                record(p, true);
            }
        }
        for p in seen {
            let t = tally.get_mut(&p).unwrap();
            if is_current {
                t.current = true;
            } else {
                t.prior = true;
            }
        }
    }
    let mut keywords: Vec<Keyword> = tally
        .into_iter()
        .map(|(phrase, t)| Keyword {
            phrase,
            score: t.count as f64 * if t.in_claims { config.claims_boost } else { 1.0 },
            source: match (t.current, t.prior) {
                (true, true) => PhraseSource::Both,
                (true, false) => PhraseSource::CurrentPatent,
                _ => PhraseSource::PriorArt,
            },
        })
        .collect();
    keywords.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.phrase.cmp(&b.phrase)));
    TechKeywords { keywords }
}
