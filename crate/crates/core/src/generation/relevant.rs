//! Keyword-to-document matching over an external corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ClusterKind, SegmentCluster};
use crate::corpus::{preprocess, RawDocument, Stoplist};
use crate::parser::TechKeywords;

static PARAGRAPH_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n\s*\n").unwrap());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevantDoc {
    pub doc_id: String,
    pub score: f64,
    pub priority: f64,
    pub excerpt: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelevantDocs {
    pub docs: Vec<RelevantDoc>,
}

impl RelevantDocs {
    pub fn cluster(&self) -> SegmentCluster {
        SegmentCluster {
            kind: ClusterKind::RelevantDocs,
            segments: self
                .docs
                .iter()
                .map(|d| super::ClusterSegment { text: d.excerpt.clone(), priority: d.priority })
                .collect(),
        }
    }
}

fn counts(tokens: impl IntoIterator<Item = String>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for t in tokens {
        *out.entry(t).or_insert(0.0) += 1.0;
    }
    out
}

/// First paragraph (or line, for single-paragraph text) sharing a token
/// with the keyword bag.
fn excerpt(text: &str, bag: &BTreeMap<String, f64>, stoplist: &Stoplist) -> String {
    let mut parts: Vec<&str> = PARAGRAPH_BREAK.split(text).collect();
    if parts.len() == 1 {
        parts = text.lines().collect();
    }
    parts
        .into_iter()
        .find(|p| preprocess(p, stoplist).tokens.iter().any(|t| bag.contains_key(t)))
        .unwrap_or(text)
        .trim()
        .to_string()
}

/// TF-IDF cosine between the bag of keyword tokens and each document, with
/// smoothed idf `ln((1+N)/(1+df)) + 1`. Documents with no shared token are
/// left out; the rest are ranked by score, then doc_id, and cut to `top_n`.
/// Priority is `scale * score / best + 0.1`.
pub fn match_relevant_docs(keywords: &TechKeywords, docs: &[RawDocument], top_n: usize, scale: f64) -> RelevantDocs {
    let stoplist = Stoplist::standard();
    let bag = counts(keywords.keywords.iter().flat_map(|k| preprocess(&k.phrase, &stoplist).tokens));
    if bag.is_empty() || docs.is_empty() {
        return RelevantDocs::default();
    }
    let tfs: Vec<BTreeMap<String, f64>> = docs.iter().map(|d| counts(preprocess(&d.text, &stoplist).tokens)).collect();
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for tf in &tfs {
        for t in tf.keys() {
            *df.entry(t.as_str()).or_insert(0.0) += 1.0;
        }
    }
    let n = docs.len() as f64;
    let idf = |t: &str| ((1.0 + n) / (1.0 + df.get(t).copied().unwrap_or(0.0))).ln() + 1.0;
    let q_norm = bag.iter().map(|(t, c)| (c * idf(t)).powi(2)).sum::<f64>().sqrt();

    let mut scored: Vec<(usize, f64)> = tfs
        .iter()
        .enumerate()
        .filter_map(|(i, tf)| {
            let shared: BTreeSet<&String> = bag.keys().filter(|t| tf.contains_key(*t)).collect();
            if shared.is_empty() {
                return None;
            }
            let dot: f64 = shared.iter().map(|t| bag[*t] * tf[*t] * idf(t).powi(2)).sum();
            let d_norm = tf.iter().map(|(t, c)| (c * idf(t)).powi(2)).sum::<f64>().sqrt();
            Some((i, dot / (q_norm * d_norm)))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| docs[a.0].doc_id.cmp(&docs[b.0].doc_id)));
    scored.truncate(top_n);
    let best = scored.first().map_or(1.0, |s| s.1);
    RelevantDocs {
        docs: scored
            .into_iter()
            .map(|(i, score)| RelevantDoc {
                doc_id: docs[i].doc_id.clone(),
                score,
                priority: scale * score / best + 0.1,
                excerpt: excerpt(&docs[i].text, &bag, &stoplist),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocKind;
    use crate::parser::{Keyword, PhraseSource};

    fn doc(id: &str, text: &str) -> RawDocument {
        serde_json::from_value(serde_json::json!({"doc_id": id, "kind": "External", "text": text})).unwrap()
    }

    fn kw(phrases: &[&str]) -> TechKeywords {
        TechKeywords {
            keywords: phrases
                .iter()
                .map(|p| Keyword { phrase: p.to_string(), score: 1.0, source: PhraseSource::CurrentPatent })
                .collect(),
        }
    }

    #[test]
    fn only_matching_doc_returned() {
        let docs = [doc("a", "A laser diode emits light."), doc("b", "Gear trains transmit torque.")];
        assert_eq!(docs[0].kind, DocKind::External);
        let r = match_relevant_docs(&kw(&["laser diode"]), &docs, 5, 0.3);
        assert_eq!(r.docs.len(), 1);
        assert_eq!(r.docs[0].doc_id, "a");
        assert!((r.docs[0].priority - 0.4).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_cosines() {
        // idf: laser ln(4/3)+1, diode/fiber ln(4/2)+1; worked by hand to 4 places
        let docs = [doc("a", "laser diode laser"), doc("b", "laser fiber"), doc("c", "gear train")];
        let r = match_relevant_docs(&kw(&["laser diode"]), &docs, 5, 0.3);
        let got: Vec<(&str, f64)> = r.docs.iter().map(|d| (d.doc_id.as_str(), d.score)).collect();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0, "a");
        assert!((got[0].1 - 0.9431).abs() < 1e-3, "{got:?}");
        assert_eq!(got[1].0, "b");
        assert!((got[1].1 - 0.3664).abs() < 1e-3, "{got:?}");
        assert!((r.docs[1].priority - (0.3 * 0.3664 / 0.9431 + 0.1)).abs() < 1e-3);
    }

    #[test]
    fn no_overlap_or_empty_corpus() {
        let docs = [doc("a", "gear train"), doc("b", "rotor blade")];
        assert!(match_relevant_docs(&kw(&["laser"]), &docs, 5, 0.3).docs.is_empty());
        assert!(match_relevant_docs(&kw(&["laser"]), &[], 5, 0.3).cluster().segments.is_empty());
    }

    #[test]
    fn excerpt_is_first_matching_paragraph() {
        let d = doc("a", "Background on optics.\n\nThe laser diode is pulsed.\n\nAnother laser note.");
        let r = match_relevant_docs(&kw(&["laser"]), &[d], 5, 0.3);
        assert_eq!(r.docs[0].excerpt, "The laser diode is pulsed.");
    }
}
