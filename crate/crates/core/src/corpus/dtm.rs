//! Sparse document-term matrix.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{CorpusError, TokenList};

/// One document's sparse counts, sorted by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmRow {
    pub doc_id: String,
    pub counts: Vec<(usize, u32)>,
}

impl DtmRow {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c as u64).sum()
    }
}

/// Vocabulary is sorted lexicographically, so column indices are dense and
/// independent of document order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentTermMatrix {
    vocabulary: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    rows: Vec<DtmRow>,
}

impl DocumentTermMatrix {
    /// Assemble from parts, checking the matrix invariants.
    pub fn from_parts(vocabulary: Vec<String>, rows: Vec<DtmRow>) -> Result<Self, CorpusError> {
        let index: HashMap<String, usize> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != vocabulary.len() {
            return Err(CorpusError::InvalidMatrix("duplicate vocabulary term".into()));
        }
        for row in &rows {
            for &(col, count) in &row.counts {
                if col >= vocabulary.len() || count == 0 {
                    return Err(CorpusError::InvalidMatrix(format!(
                        "bad cell ({col}, {count}) in row {}",
                        row.doc_id
                    )));
                }
            }
        }
        Ok(Self { vocabulary, index, rows })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn rows(&self) -> &[DtmRow] {
        &self.rows
    }

    pub fn num_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.rows.iter().map(DtmRow::total).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() || self.total_tokens() == 0
    }

    /// Rebuild the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }
}

/// Count terms across `docs`, keep terms with corpus frequency at least
/// `min_count`, and emit one row per input document (in input order).
pub fn build_dtm(
    docs: &[(String, TokenList)],
    min_count: u32,
) -> Result<DocumentTermMatrix, CorpusError> {
    if min_count == 0 {
        return Err(CorpusError::InvalidArgument("min_count must be >= 1".into()));
    }
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for (_, list) in docs {
        for t in &list.tokens {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let vocabulary: Vec<String> = freq
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .map(|(t, _)| t.to_string())
        .collect();
    if vocabulary.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }
    let index: HashMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let rows = docs
        .iter()
        .map(|(doc_id, list)| {
            let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
            for t in &list.tokens {
                if let Some(&col) = index.get(t.as_str()) {
                    *counts.entry(col).or_default() += 1;
                }
            }
            DtmRow {
                doc_id: doc_id.clone(),
                counts: counts.into_iter().collect(),
            }
        })
        .collect();
    DocumentTermMatrix::from_parts(vocabulary, rows)
}
