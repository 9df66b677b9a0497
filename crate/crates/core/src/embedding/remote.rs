//! HTTP embedding provider: `POST {model, input: [texts]}` returning
//! `{embeddings: [[...]]}`.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingError, EmbeddingProvider};
use crate::http::{with_retries, HttpTransport, UreqTransport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub dim: usize,
    pub token_limit: Option<usize>,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub attempts: usize,
    pub timeout_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8081/v1/embeddings".into(),
            model: "default".into(),
            api_key_env: None,
            dim: 768,
            token_limit: Some(512),
            batch_size: 16,
            max_in_flight: 4,
            attempts: 3,
            timeout_ms: 30_000,
        }
    }
}

pub struct RemoteProvider {
    config: RemoteConfig,
    api_key: Option<String>,
    transport: Arc<dyn HttpTransport>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = config.api_key_env.as_ref().and_then(|v| std::env::var(v).ok());
        Self::with_transport(config, api_key, Arc::new(UreqTransport))
    }

    pub fn with_transport(config: RemoteConfig, api_key: Option<String>, transport: Arc<dyn HttpTransport>) -> Self {
        RemoteProvider {
            config,
            api_key,
            transport,
        }
    }

    fn call(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        let body = serde_json::json!({ "model": self.config.model, "input": texts });
        let mut headers = Vec::new();
        if let Some(key) = &self.api_key {
            headers.push(("authorization".to_string(), format!("Bearer {key}")));
        }
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let reply = with_retries(self.config.attempts, || {
            self.transport.post_json(&self.config.endpoint, &headers, &body, timeout)
        })
        .map_err(|e| EmbeddingError::remote(&self.config.endpoint, &e))?;
        let malformed = |why: String| EmbeddingError::Remote {
            provider: self.config.endpoint.clone(),
            retryable: false,
            diagnostics: why,
        };
        let rows: Vec<Vec<f64>> = serde_json::from_value(reply.get("embeddings").cloned().unwrap_or_default())
            .map_err(|e| malformed(format!("bad embeddings field: {e}")))?;
        if rows.len() != texts.len() {
            return Err(malformed(format!("{} embeddings for {} inputs", rows.len(), texts.len())));
        }
        let tag = self.tag();
        rows.into_iter()
            .map(|row| {
                if row.len() != self.config.dim {
                    return Err(EmbeddingError::DimMismatch(row.len(), self.config.dim));
                }
                Embedding::normalized(row, tag.clone())
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn token_limit(&self) -> Option<usize> {
        self.config.token_limit
    }

    fn tag(&self) -> String {
        format!("remote/{}/{}", self.config.model, self.config.dim)
    }

    /// Batches are sent with at most `max_in_flight` concurrent requests.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let batches: Vec<&[&str]> = texts.chunks(self.config.batch_size.max(1)).collect();
        let mut out = Vec::with_capacity(texts.len());
        for wave in batches.chunks(self.config.max_in_flight.max(1)) {
            let results: Vec<Result<Vec<Embedding>, EmbeddingError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|b| s.spawn(move || self.call(b))).collect();
                handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}
