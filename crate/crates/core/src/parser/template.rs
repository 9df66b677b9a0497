//! Placeholder grammar and autofill.
//!
//! Blanks are written `{{name}}` or `{{kind:name}}` with kind one of `bib`,
//! `kw`, `manual`. Unprefixed names must be a known bibliographic or keyword
//! field. Names are `[A-Za-z_][A-Za-z0-9_]*`; a name may repeat, in which
//! case every occurrence is the same blank.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::biblio::{render_claims, BiblioInfo};
use super::keywords::{PhraseSource, TechKeywords};

pub const BIBLIO_FIELDS: &[&str] =
    &["claims", "statute", "statutes", "citation", "citations", "party", "parties", "figure", "figures"];
pub const KEYWORD_FIELDS: &[&str] = &["tech", "tech_current", "tech_prior", "tech_shared"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlaceholderError {
    #[error("unknown placeholder: {0}")]
    Unknown(String),
    #[error("malformed placeholder at byte {0}")]
    Malformed(usize),
    #[error("placeholder {0} used with conflicting kinds")]
    Conflict(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlankKind {
    Biblio,
    TechKeyword,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateBlank {
    pub name: String,
    pub kind: BlankKind,
    pub fill: Option<String>,
}

/// One occurrence in the body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placeholder {
    pub start: usize,
    pub end: usize,
    pub name: String,
    pub kind: BlankKind,
}

/// Byte span in the filled body that came from autofill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilledSpan {
    pub start: usize,
    pub end: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutofillResult {
    pub body: String,
    /// Unique blanks in order of first appearance.
    pub blanks: Vec<TemplateBlank>,
    pub spans: Vec<FilledSpan>,
    /// Manual blanks, left verbatim for the attorney.
    pub manual: Vec<String>,
    /// Biblio or keyword blanks with no source data, left verbatim.
    pub unfilled: Vec<String>,
}

static OPEN_OR_CLOSE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{|\}\}").unwrap());
static INNER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:(bib|kw|manual):)?([A-Za-z_][A-Za-z0-9_]*)\s*$").unwrap());

fn classify(prefix: Option<&str>, name: &str) -> Result<BlankKind, PlaceholderError> {
    let bib = BIBLIO_FIELDS.contains(&name);
    let kw = KEYWORD_FIELDS.contains(&name);
    match prefix {
        Some("manual") => Ok(BlankKind::Manual),
        Some("bib") if bib => Ok(BlankKind::Biblio),
        Some("kw") if kw => Ok(BlankKind::TechKeyword),
        None if bib => Ok(BlankKind::Biblio),
        None if kw => Ok(BlankKind::TechKeyword),
        _ => Err(PlaceholderError::Unknown(name.to_string())),
    }
}

/// All placeholder occurrences, in body order.
pub fn parse_placeholders(body: &str) -> Result<Vec<Placeholder>, PlaceholderError> {
    let mut out: Vec<Placeholder> = Vec::new();
    let mut kinds: BTreeMap<String, BlankKind> = BTreeMap::new();
    let mut open: Option<usize> = None;
    for m in OPEN_OR_CLOSE.find_iter(body) {
        match (m.as_str(), open) {
            ("{{", None) => open = Some(m.start()),
            ("}}", Some(start)) => {
                let inner = &body[start + 2..m.start()];
                let cap = INNER.captures(inner).ok_or(PlaceholderError::Malformed(start))?;
                let name = cap[2].to_string();
                let kind = classify(cap.get(1).map(|p| p.as_str()), &name)?;
                if *kinds.entry(name.clone()).or_insert(kind) != kind {
                    return Err(PlaceholderError::Conflict(name));
                }
                out.push(Placeholder { start, end: m.end(), name, kind });
                open = None;
            }
            (_, Some(start)) => return Err(PlaceholderError::Malformed(start)),
            (_, None) => return Err(PlaceholderError::Malformed(m.start())),
        }
    }
    match open {
        Some(start) => Err(PlaceholderError::Malformed(start)),
        None => Ok(out),
    }
}

/// Checks a template body against the grammar and returns its unique blanks.
pub fn template_blanks(body: &str) -> Result<Vec<TemplateBlank>, PlaceholderError> {
    let mut blanks: Vec<TemplateBlank> = Vec::new();
    for p in parse_placeholders(body)? {
        if !blanks.iter().any(|b| b.name == p.name) {
            blanks.push(TemplateBlank { name: p.name, kind: p.kind, fill: None });
        }
    }
    Ok(blanks)
}

fn first_or_all<T>(items: &[T], all: bool, render: impl Fn(&T) -> String) -> Option<String> {
    if items.is_empty() {
        None
    } else if all {
        Some(items.iter().map(render).collect::<Vec<_>>().join(", "))
    } else {
        Some(render(&items[0]))
    }
}

fn biblio_value(name: &str, biblio: &BiblioInfo) -> Option<String> {
    match name {
        "claims" => (!biblio.claims.is_empty()).then(|| render_claims(&biblio.claims)),
        "statute" | "statutes" => first_or_all(&biblio.statutes, name == "statutes", |s| s.render()),
        "citation" | "citations" => first_or_all(&biblio.citations, name == "citations", String::clone),
        "party" | "parties" => first_or_all(&biblio.parties, name == "parties", String::clone),
        "figure" | "figures" => first_or_all(&biblio.figures, name == "figures", String::clone),
        _ => None,
    }
}

fn keyword_value(name: &str, keywords: &TechKeywords) -> Option<String> {
    let hit = match name {
        "tech" => keywords.top(None),
        "tech_current" => keywords.top(Some(PhraseSource::CurrentPatent)),
        "tech_prior" => keywords.top(Some(PhraseSource::PriorArt)),
        "tech_shared" => keywords.top_shared(),
        _ => None,
    };
    hit.map(|k| k.phrase.clone())
}

/// Fills Biblio and TechKeyword blanks. Text outside placeholder spans is
/// copied unchanged.
pub fn autofill(body: &str, biblio: &BiblioInfo, keywords: &TechKeywords) -> Result<AutofillResult, PlaceholderError> {
    let placeholders = parse_placeholders(body)?;
    let mut blanks = template_blanks(body)?;
    for blank in &mut blanks {
        blank.fill = match blank.kind {
            BlankKind::Biblio => biblio_value(&blank.name, biblio),
            BlankKind::TechKeyword => keyword_value(&blank.name, keywords),
            BlankKind::Manual => None,
        };
    }
    let fills: BTreeMap<&str, &TemplateBlank> = blanks.iter().map(|b| (b.name.as_str(), b)).collect();

    let mut out = String::with_capacity(body.len());
    let mut spans = Vec::new();
    let mut cursor = 0;
    for p in &placeholders {
        out.push_str(&body[cursor..p.start]);
        match &fills[p.name.as_str()].fill {
            Some(text) => {
                spans.push(FilledSpan { start: out.len(), end: out.len() + text.len(), name: p.name.clone() });
                out.push_str(text);
            }
            None => out.push_str(&body[p.start..p.end]),
        }
        cursor = p.end;
    }
    out.push_str(&body[cursor..]);

    let manual = blanks.iter().filter(|b| b.kind == BlankKind::Manual).map(|b| b.name.clone()).collect();
    let unfilled = blanks
        .iter()
        .filter(|b| b.kind != BlankKind::Manual && b.fill.is_none())
        .map(|b| b.name.clone())
        .collect();
    Ok(AutofillResult { body: out, blanks, spans, manual, unfilled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_oa, Keyword};
    use proptest::prelude::*;

    const EXCERPT: &str = "Claim(s) 1-5 and 7-20 is/are rejected under pre-AIA 35 U.S.C. 102(e) as being anticipated by Jin et al. (US 2011/0002161)";

    #[test]
    fn fills_statute_and_citation() {
        let r = autofill("rejected under {{statute}} over {{citation}}", &parse_oa(EXCERPT), &TechKeywords::default()).unwrap();
        assert_eq!(r.body, "rejected under pre-AIA 35 U.S.C. 102(e) over US 2011/0002161");
        assert!(r.manual.is_empty() && r.unfilled.is_empty());
        assert_eq!(&r.body[r.spans[1].start..r.spans[1].end], "US 2011/0002161");
    }

    #[test]
    fn manual_only_body_is_unchanged() {
        let body = "{{manual:argument}} and again {{manual:argument}}; {{manual:closing}}";
        let r = autofill(body, &parse_oa(EXCERPT), &TechKeywords::default()).unwrap();
        assert_eq!(r.body, body);
        assert_eq!(r.manual, vec!["argument", "closing"]);
        assert!(r.spans.is_empty());
    }

    #[test]
    fn unknown_name_is_rejected() {
        let err = autofill("see {{bogus}}", &BiblioInfo::default(), &TechKeywords::default()).unwrap_err();
        assert!(err.to_string().starts_with("unknown placeholder"));
        assert!(matches!(parse_placeholders("{{kw:claims}}"), Err(PlaceholderError::Unknown(_))));
    }

    #[test]
    fn malformed_and_conflicting() {
        assert_eq!(parse_placeholders("a {{claims"), Err(PlaceholderError::Malformed(2)));
        assert_eq!(parse_placeholders("a }} b"), Err(PlaceholderError::Malformed(2)));
        assert_eq!(parse_placeholders("{{two words}}"), Err(PlaceholderError::Malformed(0)));
        assert!(matches!(parse_placeholders("{{claims}} {{manual:claims}}"), Err(PlaceholderError::Conflict(_))));
    }

    #[test]
    fn empty_field_is_reported() {
        let r = autofill("see {{figures}} of {{party}}", &parse_oa(EXCERPT), &TechKeywords::default()).unwrap();
        assert_eq!(r.body, "see {{figures}} of Jin et al.");
        assert_eq!(r.unfilled, vec!["figures"]);
    }

    #[test]
    fn keyword_blanks_use_matching_source() {
        let kw = TechKeywords {
            keywords: vec![
                Keyword { phrase: "gear train".into(), score: 4.0, source: PhraseSource::PriorArt },
                Keyword { phrase: "rotor blade".into(), score: 3.0, source: PhraseSource::CurrentPatent },
            ],
        };
        let r = autofill("{{kw:tech_current}} vs {{tech_prior}} / {{tech}} / {{tech_shared}}", &BiblioInfo::default(), &kw).unwrap();
        assert_eq!(r.body, "rotor blade vs gear train / gear train / {{tech_shared}}");
        assert_eq!(r.unfilled, vec!["tech_shared"]);
    }

    fn literal() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 .,;()\n-]{0,20}"
    }

    fn placeholder() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("{{claims}}".to_string()),
            Just("{{bib:statute}}".to_string()),
            Just("{{citations}}".to_string()),
            Just("{{figures}}".to_string()),
            Just("{{tech}}".to_string()),
            Just("{{manual:argument}}".to_string()),
        ]
    }

    proptest! {
        #[test]
        fn text_outside_placeholders_is_untouched(
            parts in proptest::collection::vec((literal(), placeholder()), 0..6),
            tail in literal(),
            oa in "[ -~]{0,120}",
        ) {
            let body: String = parts.iter().map(|(l, p)| format!("{l}{p}")).collect::<String>() + &tail;
            let biblio = parse_oa(&format!("{oa} {EXCERPT}"));
            let r = autofill(&body, &biblio, &TechKeywords::default()).unwrap();
            // mask out filled spans and compare the remaining literal text in order
            let mut kept = String::new();
            let mut cursor = 0;
            for s in &r.spans {
                kept.push_str(&r.body[cursor..s.start]);
                kept.push('\u{0}');
                cursor = s.end;
            }
            kept.push_str(&r.body[cursor..]);
            let mut expected = String::new();
            for (l, p) in &parts {
                expected.push_str(l);
                let name = p.trim_matches(|c| c == '{' || c == '}').rsplit(':').next().unwrap();
                let filled = r.blanks.iter().find(|b| b.name == name).unwrap().fill.is_some();
                expected.push_str(if filled { "\u{0}" } else { p });
            }
            expected.push_str(&tail);
            prop_assert_eq!(kept, expected);
        }
    }
}
