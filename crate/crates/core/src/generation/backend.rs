//! Generation backends: a deterministic extractive mock and a remote HTTP
//! model.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{build_prompt, GenError, PromptBundle, TokenCounter};
use crate::embedding::split_sentences;
use crate::http::{with_retries, HttpTransport, UreqTransport};

pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &str;
    fn max_input_tokens(&self) -> usize;
    fn deterministic(&self) -> bool;
    fn complete(&self, prompt: &str, bundle: &PromptBundle) -> Result<String, GenError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: usize,
    pub completion: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub backend_name: String,
    pub token_usage: TokenUsage,
    /// Exact prompt sent, kept for audit.
    pub prompt: String,
}

/// Renders the prompt, checks it against the backend limit before any call,
/// then generates.
pub fn generate(bundle: &PromptBundle, backend: &dyn GenerationBackend, counter: &TokenCounter) -> Result<Generation, GenError> {
    let prompt = build_prompt(bundle);
    let tokens = counter.count(&prompt);
    if tokens > backend.max_input_tokens() {
        return Err(GenError::OverLimit {
            backend: backend.name().to_string(),
            tokens,
            limit: backend.max_input_tokens(),
        });
    }
    let text = backend.complete(&prompt, bundle)?;
    Ok(Generation {
        token_usage: TokenUsage { prompt: tokens, completion: counter.count(&text) },
        text,
        backend_name: backend.name().to_string(),
        prompt,
    })
}

/// Returns "REMARKS:" followed by the first sentence of every non-role
/// segment, one per line.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub max_input_tokens: usize,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend { max_input_tokens: 1_000_000 }
    }
}

impl GenerationBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn max_input_tokens(&self) -> usize {
        self.max_input_tokens
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn complete(&self, _prompt: &str, bundle: &PromptBundle) -> Result<String, GenError> {
        let mut out = String::from("REMARKS:");
        for seg in &bundle.segments {
            if let Some(first) = split_sentences(&seg.text).first() {
                out.push('\n');
                out.push_str(first);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteGenConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: Option<String>,
    pub max_input_tokens: usize,
    pub max_tokens: usize,
    pub attempts: usize,
    pub timeout_ms: u64,
}

impl Default for RemoteGenConfig {
    fn default() -> Self {
        RemoteGenConfig {
            endpoint: "http://127.0.0.1:8082/v1/generate".into(),
            model: "default".into(),
            api_key_env: None,
            max_input_tokens: 8192,
            max_tokens: 1024,
            attempts: 3,
            timeout_ms: 120_000,
        }
    }
}

/// `POST {model, prompt, max_tokens}`; the reply text is read from `text`,
/// or from `choices[0].text` / `choices[0].message.content`.
pub struct RemoteBackend {
    config: RemoteGenConfig,
    api_key: Option<String>,
    transport: Arc<dyn HttpTransport>,
}

impl RemoteBackend {
    pub fn new(config: RemoteGenConfig) -> Self {
        let api_key = config.api_key_env.as_ref().and_then(|v| std::env::var(v).ok());
        Self::with_transport(config, api_key, Arc::new(UreqTransport))
    }

    pub fn with_transport(config: RemoteGenConfig, api_key: Option<String>, transport: Arc<dyn HttpTransport>) -> Self {
        RemoteBackend { config, api_key, transport }
    }
}

fn reply_text(v: &serde_json::Value) -> Option<String> {
    let choice = v.get("choices").and_then(|c| c.get(0));
    v.get("text")
        .or_else(|| choice.and_then(|c| c.get("text")))
        .or_else(|| choice.and_then(|c| c.get("message")).and_then(|m| m.get("content")))
        .and_then(|t| t.as_str())
        .map(str::to_string)
}

impl GenerationBackend for RemoteBackend {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn max_input_tokens(&self) -> usize {
        self.config.max_input_tokens
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn complete(&self, prompt: &str, _bundle: &PromptBundle) -> Result<String, GenError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": self.config.max_tokens,
        });
        let mut headers = Vec::new();
        if let Some(key) = &self.api_key {
            headers.push(("authorization".to_string(), format!("Bearer {key}")));
        }
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let reply = with_retries(self.config.attempts, || {
            self.transport.post_json(&self.config.endpoint, &headers, &body, timeout)
        })
        .map_err(|e| GenError::Remote {
            backend: self.config.model.clone(),
            retryable: e.retryable(),
            message: e.to_string(),
        })?;
        reply_text(&reply).ok_or_else(|| GenError::Remote {
            backend: self.config.model.clone(),
            retryable: false,
            message: "reply has no text".into(),
        })
    }
}
