//! Document corpus: ingestion of line-delimited OA/response records,
//! preprocessing into token streams, and the document-term matrix.

mod dtm;
mod stoplist;
mod tokenize;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dtm::{build_dtm, DocumentTermMatrix, DtmRow};
pub use stoplist::{parse_entry_lines, Stoplist, DEFAULT_CUSTOM_STOPLIST, ENGLISH_STOPWORDS};
pub use tokenize::{alnum_tokens, is_numeric_token, preprocess, TokenList};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("duplicate doc_id {doc_id:?} (line {line})")]
    DuplicateDocId { doc_id: String, line: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DocKind {
    #[serde(rename = "OA")]
    Oa,
    Response,
    External,
}

impl DocKind {
    fn pairs_with(self, other: DocKind) -> bool {
        matches!(
            (self, other),
            (DocKind::Oa, DocKind::Response) | (DocKind::Response, DocKind::Oa)
        )
    }
}

impl fmt::Display for DocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DocKind::Oa => "OA",
            DocKind::Response => "Response",
            DocKind::External => "External",
        })
    }
}

/// One prosecution document. `filed_date` is kept as the source string and
/// validated as an ISO-8601 calendar date on ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDocument {
    pub doc_id: String,
    pub kind: DocKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub art_unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filed_date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
}

impl RawDocument {
    pub fn filed(&self) -> Option<NaiveDate> {
        self.filed_date
            .as_deref()
            .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

/// Immutable, shareable collection of documents in file order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<RawDocument>,
    // original line bytes, so export reproduces accepted input verbatim
    source_lines: Vec<Option<String>>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_documents(docs: Vec<RawDocument>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::default();
        for (i, doc) in docs.into_iter().enumerate() {
            corpus.push(doc, None, i + 1)?;
        }
        Ok(corpus)
    }

    fn push(&mut self, doc: RawDocument, line: Option<String>, lineno: usize) -> Result<(), CorpusError> {
        if self.by_id.contains_key(&doc.doc_id) {
            return Err(CorpusError::DuplicateDocId {
                doc_id: doc.doc_id,
                line: lineno,
            });
        }
        self.by_id.insert(doc.doc_id.clone(), self.docs.len());
        self.docs.push(doc);
        self.source_lines.push(line);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[RawDocument] {
        &self.docs
    }

    pub fn get(&self, doc_id: &str) -> Option<&RawDocument> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn of_kind(&self, kind: DocKind) -> impl Iterator<Item = &RawDocument> {
        self.docs.iter().filter(move |d| d.kind == kind)
    }

    /// Preprocess every document in parallel; output keeps corpus order.
    pub fn tokenize(&self, stoplist: &Stoplist) -> Vec<(String, TokenList)> {
        self.docs
            .par_iter()
            .map(|d| (d.doc_id.clone(), preprocess(&d.text, stoplist)))
            .collect()
    }

    /// Write one JSON object per line. Ingested records are written back
    /// exactly as read.
    pub fn export<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (doc, line) in self.docs.iter().zip(&self.source_lines) {
            match line {
                Some(l) => writeln!(out, "{l}")?,
                None => writeln!(out, "{}", serde_json::to_string(doc)?)?,
            }
        }
        Ok(())
    }

    pub fn export_file(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        self.export(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Draw a seeded sample with explicit per-stratum quotas. Strata are
    /// (art unit, filing year); a missing component is `None` in the key.
    pub fn stratified_sample(&self, quotas: &BTreeMap<Stratum, usize>, seed: u64) -> Vec<&RawDocument> {
        let mut strata: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
        for (i, d) in self.docs.iter().enumerate() {
            strata.entry(Stratum::of(d)).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = Vec::new();
        for (stratum, quota) in quotas {
            if let Some(members) = strata.get(stratum) {
                let mut members = members.clone();
                members.shuffle(&mut rng);
                members.truncate(*quota);
                members.sort_unstable();
                picked.extend(members);
            }
        }
        picked.sort_unstable();
        picked.into_iter().map(|i| &self.docs[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stratum {
    pub art_unit: Option<String>,
    pub year: Option<i32>,
}

impl Stratum {
    pub fn of(doc: &RawDocument) -> Self {
        Stratum {
            art_unit: doc.art_unit.clone(),
            year: doc.filed().map(|d| d.year()),
        }
    }
}

/// Load a line-delimited corpus file. Malformed lines are skipped and
/// reported; a duplicate `doc_id` aborts the load.
pub fn ingest(path: impl AsRef<Path>) -> Result<(Corpus, LoadReport), CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn ingest_reader<R: BufRead>(reader: R) -> Result<(Corpus, LoadReport), CorpusError> {
    let mut parsed: Vec<(usize, String, RawDocument)> = Vec::new();
    let mut report = LoadReport::default();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match validate_record(&line) {
            Ok(doc) => {
                if !seen.insert(doc.doc_id.clone()) {
                    return Err(CorpusError::DuplicateDocId {
                        doc_id: doc.doc_id,
                        line: lineno,
                    });
                }
                parsed.push((lineno, line, doc));
            }
            Err(reason) => report.rejected.push(Rejection { line: lineno, reason }),
        }
    }

    // pair links are checked once every record is known
    let kinds: HashMap<&str, DocKind> = parsed
        .iter()
        .map(|(_, _, d)| (d.doc_id.as_str(), d.kind))
        .collect();
    let mut dangling = Vec::new();
    for (idx, (lineno, _, doc)) in parsed.iter().enumerate() {
        if let Some(pair) = &doc.pair_id {
            let reason = match kinds.get(pair.as_str()) {
                None => Some(format!("pair_id {pair:?} references no document")),
                Some(k) if !doc.kind.pairs_with(*k) => {
                    Some(format!("pair_id {pair:?} links {} to {}", doc.kind, k))
                }
                Some(_) => None,
            };
            if let Some(reason) = reason {
                dangling.push(idx);
                report.rejected.push(Rejection { line: *lineno, reason });
            }
        }
    }
    report.rejected.sort_by_key(|r| r.line);

    let mut corpus = Corpus::default();
    for (idx, (lineno, line, doc)) in parsed.into_iter().enumerate() {
        if dangling.contains(&idx) {
            continue;
        }
        corpus.push(doc, Some(line), lineno)?;
    }
    report.accepted = corpus.len();
    Ok((corpus, report))
}

fn validate_record(line: &str) -> Result<RawDocument, String> {
    let doc: RawDocument = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    if doc.doc_id.trim().is_empty() {
        return Err("empty doc_id".into());
    }
    if let Some(date) = &doc.filed_date {
        NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|_| format!("filed_date {date:?} is not an ISO-8601 date"))?;
    }
    Ok(doc)
}
