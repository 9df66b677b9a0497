//! Regex extraction of claims, statutes, citations, parties and figures.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statute {
    pub title: String,
    pub section: String,
    pub pre_aia: bool,
}

impl Statute {
    /// e.g. "pre-AIA 35 U.S.C. 102(e)"
    pub fn render(&self) -> String {
        let prefix = if self.pre_aia { "pre-AIA " } else { "" };
        format!("{prefix}{} {}", self.title, self.section)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiblioInfo {
    pub claims: BTreeSet<u32>,
    pub statutes: Vec<Statute>,
    pub citations: Vec<String>,
    pub parties: Vec<String>,
    pub figures: Vec<String>,
}

static CLAIMS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bclaims?(?:\(s\))?\s+(\d+(?:\s*(?:-|–|through|to|,|and|or|&)\s*\d+)*)").unwrap()
});
static CLAIM_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(\d+)(?:\s*(?:-|–|through|to)\s*(\d+))?").unwrap());
static STATUTE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(pre-AIA\s+|AIA\s+)?35\s*U\.?\s*S\.?\s*C\.?\s*(?:§+\s*)?(\d{3}[a-z]?)((?:\([a-z0-9]+\))*)(?:\s+(?:and|or|&)\s+(?:§+\s*)?(\d{3}[a-z]?)((?:\([a-z0-9]+\))*))?",
    )
    .unwrap()
});
static PUBLICATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:\b(?:US|U\.S\.)\s*(?:Pat(?:ent)?\.?\s*)?(?:Pub(?:\.|lication)?\s*)?(?:No\.?\s*)?)?\b((?:19|20)\d{2})\s*/\s*(\d{7})\b|\b(?:US|U\.S\.)\s*(?:Pub(?:\.|lication)?\s*)?(?:No\.?\s*)?((?:19|20)\d{2})(\d{7})\b").unwrap()
});
static PATENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:US|U\.S\.|Pat(?:ent)?\.?)\s*(?:Pat(?:ent)?\.?\s*)?(?:No\.?\s*)?(\d{1,2},\d{3},\d{3}|\d{7,8})\b").unwrap()
});
static PARTY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\b(?:(?:anticipated|taught|disclosed|shown|suggested|unpatentable|obvious)\s+(?:by|over)|in\s+view\s+of|over)\s+([A-Z][A-Za-z'\-]+(?:\s+et\s+al\.?)?)",
    )
    .unwrap()
});
static FIGURES: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bFIG(?:URE)?S?\.?\s*(\d+[A-Z]?(?:\s*(?:,|&|and|-|–)\s*\d+[A-Z]?)*)").unwrap()
});
static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?]\s+[A-Z]|\n\s*\n").unwrap());

/// Capitalized words that follow "over" or "in view of" without naming anyone.
const NOT_PARTIES: &[&str] = &["US", "U", "The", "This", "That", "Applicant", "Examiner", "Figure", "Fig", "Claim", "Claims", "In"];

/// Expand "1-5 and 7-20" style lists. Claim 0 and reversed ranges are ignored.
pub fn expand_claims(list: &str) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for cap in CLAIM_ITEM.captures_iter(list) {
        let Ok(a) = cap[1].parse::<u32>() else { continue };
        let b = cap.get(2).and_then(|m| m.as_str().parse::<u32>().ok()).unwrap_or(a);
        if a >= 1 && b >= a && b - a <= 10_000 {
            out.extend(a..=b);
        }
    }
    out
}

/// Canonical form: "1-5, 7-20".
pub fn render_claims(claims: &BTreeSet<u32>) -> String {
    let mut parts = Vec::new();
    let mut iter = claims.iter().copied().peekable();
    while let Some(start) = iter.next() {
        let mut end = start;
        while iter.peek() == Some(&(end + 1)) {
            end = iter.next().unwrap();
        }
        parts.push(if start == end { start.to_string() } else { format!("{start}-{end}") });
    }
    parts.join(", ")
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

/// Byte ranges of sentences that state a rejection.
fn rejection_spans(text: &str) -> Vec<(usize, usize)> {
    let mut bounds = vec![0];
    bounds.extend(SENTENCE_END.find_iter(text).map(|m| m.start() + 1));
    bounds.push(text.len());
    bounds
        .windows(2)
        .filter(|w| text[w[0]..w[1]].to_lowercase().contains("rejected"))
        .map(|w| (w[0], w[1]))
        .collect()
}

fn parse_statutes(text: &str) -> Vec<Statute> {
    let mut all: Vec<(usize, Statute)> = Vec::new();
    for cap in STATUTE.captures_iter(text) {
        let pre_aia = cap.get(1).is_some_and(|m| m.as_str().to_lowercase().starts_with("pre"));
        let pos = cap.get(0).unwrap().start();
        let mut add = |num: &str, parens: &str| {
            all.push((
                pos,
                Statute {
                    title: "35 U.S.C.".into(),
                    section: format!("{num}{}", parens.to_lowercase()),
                    pre_aia,
                },
            ))
        };
        add(&cap[2], cap.get(3).map_or("", |m| m.as_str()));
        if let Some(second) = cap.get(4) {
            add(second.as_str(), cap.get(5).map_or("", |m| m.as_str()));
        }
    }
    // statutes cited in rejection sentences take precedence over boilerplate
    let spans = rejection_spans(text);
    let in_rejection: Vec<&Statute> = all
        .iter()
        .filter(|(p, _)| spans.iter().any(|(a, b)| a <= p && p < b))
        .map(|(_, s)| s)
        .collect();
    let chosen: Vec<&Statute> = if in_rejection.is_empty() {
        all.iter().map(|(_, s)| s).collect()
    } else {
        in_rejection
    };
    let mut out = Vec::new();
    for s in chosen {
        push_unique(&mut out, s.clone());
    }
    out
}

fn parse_citations(text: &str) -> Vec<String> {
    let mut found: Vec<(usize, String)> = Vec::new();
    for cap in PUBLICATION.captures_iter(text) {
        let (year, serial) = match (cap.get(1), cap.get(2)) {
            (Some(y), Some(s)) => (y.as_str(), s.as_str()),
            _ => (&cap[3], &cap[4]),
        };
        found.push((cap.get(0).unwrap().start(), format!("US {year}/{serial}")));
    }
    for cap in PATENT.captures_iter(text) {
        found.push((cap.get(0).unwrap().start(), format!("US {}", cap[1].replace(',', ""))));
    }
    found.sort_by_key(|(p, _)| *p);
    let mut out = Vec::new();
    for (_, c) in found {
        push_unique(&mut out, c);
    }
    out
}

fn parse_parties(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for cap in PARTY.captures_iter(text) {
        let raw = cap[1].trim();
        let name = raw.split_whitespace().next().unwrap_or("");
        if NOT_PARTIES.contains(&name) || name.chars().all(|c| c.is_uppercase() || !c.is_alphabetic()) {
            continue;
        }
        let party = if raw.contains("et al") { format!("{name} et al.") } else { name.to_string() };
        push_unique(&mut out, party);
    }
    out
}

fn parse_figures(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for cap in FIGURES.captures_iter(text) {
        let list = &cap[1];
        let items: Vec<&str> = Regex::new(r"\s*(?:,|&|and)\s*")
            .unwrap()
            .split(list)
            .filter(|s| !s.is_empty())
            .collect();
        for item in items {
            let range: Vec<&str> = item.split(['-', '–']).map(str::trim).collect();
            match range.as_slice() {
                [a, b] => match (a.parse::<u32>(), b.parse::<u32>()) {
                    (Ok(a), Ok(b)) if a <= b && b - a <= 100 => {
                        for n in a..=b {
                            push_unique(&mut out, format!("FIG. {n}"));
                        }
                    }
                    _ => push_unique(&mut out, format!("FIG. {}", item.to_uppercase())),
                },
                _ => push_unique(&mut out, format!("FIG. {}", item.trim().to_uppercase())),
            }
        }
    }
    out
}

/// Pure and deterministic; fields that are not found stay empty.
pub fn parse_oa(text: &str) -> BiblioInfo {
    let mut claims = BTreeSet::new();
    for cap in CLAIMS.captures_iter(text) {
        claims.extend(expand_claims(&cap[1]));
    }
    BiblioInfo {
        claims,
        statutes: parse_statutes(text),
        citations: parse_citations(text),
        parties: parse_parties(text),
        figures: parse_figures(text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EXCERPT: &str = "Claim(s) 1-5 and 7-20 is/are rejected under pre-AIA 35 U.S.C. 102(e) as being anticipated by Jin et al. (US 2011/0002161)";

    #[test]
    fn rejection_excerpt() {
        let b = parse_oa(EXCERPT);
        let expected: BTreeSet<u32> = (1..=5).chain(7..=20).collect();
        assert_eq!(b.claims, expected);
        assert_eq!(
            b.statutes,
            vec![Statute { title: "35 U.S.C.".into(), section: "102(e)".into(), pre_aia: true }]
        );
        assert_eq!(b.citations, vec!["US 2011/0002161"]);
        assert_eq!(b.parties, vec!["Jin et al."]);
        assert_eq!(b.statutes[0].render(), "pre-AIA 35 U.S.C. 102(e)");
    }

    #[test]
    fn plain_obviousness() {
        let b = parse_oa("Claims 1 and 3 are rejected under 35 U.S.C. 103");
        assert_eq!(b.claims, BTreeSet::from([1, 3]));
        assert_eq!(b.statutes, vec![Statute { title: "35 U.S.C.".into(), section: "103".into(), pre_aia: false }]);
    }

    #[test]
    fn nothing_found() {
        assert_eq!(parse_oa("Thank you for your attention."), BiblioInfo::default());
    }

    #[test]
    fn boilerplate_statutes_yield_to_rejections() {
        let text = "This application is subject to pre-AIA 35 U.S.C. 102 and 103. \
                    Claims 2-4 are rejected under 35 U.S.C. § 103(a) as being unpatentable over Smith in view of Lee.";
        let b = parse_oa(text);
        assert_eq!(b.statutes.len(), 1);
        assert_eq!(b.statutes[0].section, "103(a)");
        assert_eq!(b.parties, vec!["Smith", "Lee"]);
        let boiler = parse_oa("subject to AIA 35 U.S.C. 102 and 103");
        let sections: Vec<&str> = boiler.statutes.iter().map(|s| s.section.as_str()).collect();
        assert_eq!(sections, vec!["102", "103"]);
    }

    #[test]
    fn citation_variants() {
        let b = parse_oa("See US 7,123,456 B2, U.S. Patent No. 8123456, US 20110002161 A1 and 2012/0123456.");
        assert_eq!(b.citations, vec!["US 7123456", "US 8123456", "US 2011/0002161", "US 2012/0123456"]);
        // application serial numbers are not citations
        assert!(parse_oa("Application 12/345,678 filed").citations.is_empty());
    }

    #[test]
    fn figures() {
        let b = parse_oa("Jin teaches, Figs. 1, 2 & 7, [0026-0028], and FIG. 3A; see also Figures 4-6.");
        assert_eq!(b.figures, vec!["FIG. 1", "FIG. 2", "FIG. 7", "FIG. 3A", "FIG. 4", "FIG. 5", "FIG. 6"]);
    }

    #[test]
    fn claim_rendering() {
        let set: BTreeSet<u32> = (1..=5).chain(7..=20).collect();
        assert_eq!(render_claims(&set), "1-5, 7-20");
        assert_eq!(expand_claims(&render_claims(&set)), set);
        assert_eq!(render_claims(&BTreeSet::from([3])), "3");
        assert!(expand_claims("0").is_empty());
    }

    proptest! {
        #[test]
        fn claim_render_round_trips(claims in proptest::collection::btree_set(1u32..200, 0..40)) {
            prop_assert_eq!(expand_claims(&render_claims(&claims)), claims);
        }

        #[test]
        fn parse_is_pure(text in "[ -~]{0,200}") {
            prop_assert_eq!(parse_oa(&text), parse_oa(&text));
        }
    }
}
