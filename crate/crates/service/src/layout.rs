//! On-disk layout of a data directory, shared by the CLI (writer) and the
//! service (reader).

use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct DataDir {
    pub root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl AsRef<Path>) -> Self {
        DataDir { root: root.as_ref().to_path_buf() }
    }

    pub fn templates(&self) -> PathBuf {
        self.root.join("templates.jsonl")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.oaes")
    }

    /// Fitted local embedder (document frequencies).
    pub fn provider(&self) -> PathBuf {
        self.root.join("provider.json")
    }

    pub fn cf_dir(&self) -> PathBuf {
        self.root.join("cf")
    }

    /// Maps topic_id to a model file name inside `cf_dir`.
    pub fn cf_index(&self) -> PathBuf {
        self.cf_dir().join("index.json")
    }

    pub fn external(&self) -> PathBuf {
        self.root.join("external.jsonl")
    }

    pub fn events(&self) -> PathBuf {
        self.root.join("events.jsonl")
    }

    pub fn prompts(&self) -> PathBuf {
        self.root.join("prompts")
    }
}

/// File name for a topic's model; topic ids are free text.
pub fn model_file_name(index: usize, topic_id: &str) -> String {
    let safe: String = topic_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(40)
        .collect();
    format!("{index:04}-{safe}.model")
}
