//! Offline provider: signed feature hashing of TF-IDF weighted terms.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingError, EmbeddingProvider};
use crate::corpus::{preprocess, Stoplist};

pub const DEFAULT_DIM: usize = 512;

/// Hashed TF-IDF provider. Without a fitted document-frequency table every
/// term gets idf 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HashedTfIdf {
    dim: usize,
    num_docs: usize,
    doc_freq: BTreeMap<String, usize>,
    #[serde(skip, default = "Stoplist::standard")]
    stoplist: Stoplist,
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl HashedTfIdf {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::InvalidArgument("dim must be >= 1".into()));
        }
        Ok(HashedTfIdf {
            dim,
            num_docs: 0,
            doc_freq: BTreeMap::new(),
            stoplist: Stoplist::standard(),
        })
    }

    /// Learn document frequencies from `docs`.
    pub fn fit<'a>(dim: usize, docs: impl IntoIterator<Item = &'a str>) -> Result<Self, EmbeddingError> {
        let mut p = Self::new(dim)?;
        for doc in docs {
            p.num_docs += 1;
            let terms: HashSet<String> = preprocess(doc, &p.stoplist).tokens.into_iter().collect();
            for t in terms {
                *p.doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        Ok(p)
    }

    pub fn with_stoplist(mut self, stoplist: Stoplist) -> Self {
        self.stoplist = stoplist;
        self
    }

    /// Smoothed idf; terms unseen at fit time get the maximum weight.
    pub fn idf(&self, term: &str) -> f64 {
        if self.num_docs == 0 {
            return 1.0;
        }
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((1.0 + self.num_docs as f64) / (1.0 + df)).ln() + 1.0
    }

    fn fingerprint(&self) -> u64 {
        let mut h = fnv1a(&(self.num_docs as u64).to_le_bytes());
        for (t, df) in &self.doc_freq {
            h ^= fnv1a(t.as_bytes()).wrapping_add(*df as u64);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    fn embed_one(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let tokens = preprocess(text, &self.stoplist);
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let mut tf: BTreeMap<&str, f64> = BTreeMap::new();
        for t in &tokens.tokens {
            *tf.entry(t.as_str()).or_insert(0.0) += 1.0;
        }
        let mut v = vec![0.0; self.dim];
        for (term, count) in tf {
            let h = fnv1a(term.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign * count * self.idf(term);
        }
        Embedding::normalized(v, self.tag())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        let path = path.as_ref();
        let body = serde_json::to_vec_pretty(self).expect("serializable");
        std::fs::write(path, body).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let path = path.as_ref();
        let body = std::fs::read(path).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_slice(&body).map_err(|e| EmbeddingError::MalformedStore(e.to_string()))
    }
}

impl EmbeddingProvider for HashedTfIdf {
    fn name(&self) -> &str {
        "hashed-tfidf"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn token_limit(&self) -> Option<usize> {
        None
    }

    fn tag(&self) -> String {
        format!("hashed-tfidf/{}/{:016x}", self.dim, self.fingerprint())
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;
    use proptest::prelude::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let p = HashedTfIdf::fit(64, ["claim rejected anticipated", "wireless antenna"]).unwrap();
        let a = p.embed("The claim is anticipated by the antenna reference").unwrap();
        let b = p.embed("The claim is anticipated by the antenna reference").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_eq!(a.dim(), 64);
    }

    #[test]
    fn empty_after_preprocessing() {
        let p = HashedTfIdf::new(16).unwrap();
        assert!(matches!(p.embed("the of 123"), Err(EmbeddingError::EmptyText)));
        assert!(matches!(p.embed(""), Err(EmbeddingError::EmptyText)));
    }

    #[test]
    fn disjoint_vocabularies_are_nearly_orthogonal() {
        let p = HashedTfIdf::new(DEFAULT_DIM).unwrap();
        let a = p.embed("semiconductor wafer etching lithography photoresist substrate").unwrap();
        let b = p.embed("pharmaceutical compound dosage tablet excipient formulation").unwrap();
        // at most one shared bucket among 12 terms in 512 buckets
        assert!(cosine(&a, &b).unwrap().abs() < 0.2);
    }

    #[test]
    fn idf_changes_the_tag() {
        let a = HashedTfIdf::fit(32, ["alpha beta"]).unwrap();
        let b = HashedTfIdf::fit(32, ["alpha gamma"]).unwrap();
        assert_ne!(a.tag(), b.tag());
        assert_eq!(a.tag(), HashedTfIdf::fit(32, ["alpha beta"]).unwrap().tag());
    }

    #[test]
    fn round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = HashedTfIdf::fit(32, ["alpha beta", "beta gamma"]).unwrap();
        p.save(&path).unwrap();
        let q = HashedTfIdf::load(&path).unwrap();
        assert_eq!(p.embed("alpha gamma").unwrap(), q.embed("alpha gamma").unwrap());
    }

    proptest! {
        #[test]
        fn every_embedding_is_unit(words in proptest::collection::vec("[a-z]{3,8}", 1..30)) {
            let p = HashedTfIdf::new(128).unwrap();
            match p.embed(&words.join(" ")) {
                Ok(e) => prop_assert!((e.norm() - 1.0).abs() < 1e-6),
                Err(EmbeddingError::EmptyText | EmbeddingError::ZeroVector) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
