//! Embedding providers, long-document pooling and cosine retrieval.

mod local;
mod remote;
mod segment;
mod store;

pub use local::{HashedTfIdf, DEFAULT_DIM};
pub use remote::{RemoteConfig, RemoteProvider};
pub use segment::{chunk_text, pool, segment_and_pool, split_sentences, word_count, Pooled};
pub use store::{build_store, top_k_similar, CbResult, CbTuple, EmbeddingStore, StoreEntry};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::HttpError;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("empty text")]
    EmptyText,
    #[error("text produced a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("provider mismatch: {0:?} vs {1:?}")]
    ProviderMismatch(String, String),
    #[error("remote provider {provider} failed (retryable: {retryable}): {diagnostics}")]
    Remote {
        provider: String,
        retryable: bool,
        diagnostics: String,
    },
    #[error("remote providers are disabled by configuration")]
    RemoteDisabled,
    #[error("empty embedding store")]
    EmptyStore,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed store file: {0}")]
    MalformedStore(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EmbeddingError {
    pub fn remote(provider: &str, e: &HttpError) -> Self {
        EmbeddingError::Remote {
            provider: provider.to_string(),
            retryable: e.retryable(),
            diagnostics: e.to_string(),
        }
    }

    pub fn retryable(&self) -> bool {
        matches!(self, EmbeddingError::Remote { retryable: true, .. })
    }
}

/// Unit-norm vector tagged with the provider that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub provider_tag: String,
}

impl Embedding {
    /// Normalize `values` to unit length.
    pub fn normalized(mut values: Vec<f64>, provider_tag: impl Into<String>) -> Result<Self, EmbeddingError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Embedding {
            values,
            provider_tag: provider_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimMismatch(a.dim(), b.dim()));
    }
    if a.provider_tag != b.provider_tag {
        return Err(EmbeddingError::ProviderMismatch(a.provider_tag.clone(), b.provider_tag.clone()));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Maximum input length in whitespace tokens, `None` when unbounded.
    fn token_limit(&self) -> Option<usize>;
    /// Identifies the vector space; embeddings are only comparable within one tag.
    fn tag(&self) -> String;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError>;

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let mut out = self.embed_batch(&[text])?;
        out.pop().ok_or_else(|| EmbeddingError::InvalidArgument("provider returned no embedding".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: &[f64]) -> Embedding {
        Embedding::normalized(v.to_vec(), "t").unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&e(&[3.0, 4.0]), &e(&[3.0, 4.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&e(&[1.0, 1.0]), &e(&[1.0, 0.0])).unwrap();
        assert!((c - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((c - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn cosine_mismatches() {
        assert!(matches!(cosine(&e(&[1.0]), &e(&[1.0, 0.0])), Err(EmbeddingError::DimMismatch(1, 2))));
        let other = Embedding::normalized(vec![1.0], "u").unwrap();
        assert!(matches!(cosine(&e(&[1.0]), &other), Err(EmbeddingError::ProviderMismatch(..))));
        assert!(matches!(Embedding::normalized(vec![0.0, 0.0], "t"), Err(EmbeddingError::ZeroVector)));
    }
}
