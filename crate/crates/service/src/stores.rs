//! Read-only stores the service answers from.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use oa_core::cascade::topic_templates;
use oa_core::cf::FactorModel;
use oa_core::config::{Config, ProviderKind};
use oa_core::corpus::{ingest, DocKind, RawDocument};
use oa_core::embedding::{EmbeddingProvider, EmbeddingStore, HashedTfIdf, RemoteProvider};
use oa_core::valuation::{read_templates, TemplateRecord};
use thiserror::Error;

use crate::layout::DataDir;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Load { path: String, message: String },
    #[error("store was built with {store} but the configured embedder is {provider}")]
    ProviderMismatch { store: String, provider: String },
    #[error("remote backends are disabled by configuration")]
    RemoteDisabled,
}

fn load_err(path: &std::path::Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Load { path: path.display().to_string(), message: e.to_string() }
}

pub struct Stores {
    pub provider: Arc<dyn EmbeddingProvider>,
    pub store: EmbeddingStore,
    pub templates: BTreeMap<String, TemplateRecord>,
    pub topic_templates: BTreeMap<String, Vec<String>>,
    pub topic_models: BTreeMap<String, FactorModel>,
    pub external: Vec<RawDocument>,
}

impl Stores {
    pub fn from_parts(
        provider: Arc<dyn EmbeddingProvider>,
        store: EmbeddingStore,
        templates: Vec<TemplateRecord>,
        topic_models: BTreeMap<String, FactorModel>,
        external: Vec<RawDocument>,
    ) -> Result<Self, StoreError> {
        if store.provider_tag() != provider.tag() {
            return Err(StoreError::ProviderMismatch { store: store.provider_tag().into(), provider: provider.tag() });
        }
        let topic_templates = topic_templates(&store);
        Ok(Stores {
            provider,
            topic_templates,
            store,
            templates: templates.into_iter().map(|t| (t.template_id.clone(), t)).collect(),
            topic_models,
            external,
        })
    }

    /// Templates and embeddings are required; CF models and the external
    /// corpus are optional.
    pub fn load(dir: &DataDir, config: &Config) -> Result<Self, StoreError> {
        let provider: Arc<dyn EmbeddingProvider> = match config.embedding.provider {
            ProviderKind::Local if dir.provider().exists() => {
                Arc::new(HashedTfIdf::load(dir.provider()).map_err(|e| load_err(&dir.provider(), e))?)
            }
            ProviderKind::Local => {
                Arc::new(HashedTfIdf::new(config.embedding.dim).map_err(|e| load_err(&dir.provider(), e))?)
            }
            ProviderKind::Remote if !config.remote_enabled => return Err(StoreError::RemoteDisabled),
            ProviderKind::Remote => Arc::new(RemoteProvider::new(config.embedding.remote.clone())),
        };
        let path = dir.templates();
        let file = File::open(&path).map_err(|e| load_err(&path, e))?;
        let templates = read_templates(BufReader::new(file)).map_err(|e| load_err(&path, e))?;
        let store = EmbeddingStore::load(dir.embeddings()).map_err(|e| load_err(&dir.embeddings(), e))?;

        let mut topic_models = BTreeMap::new();
        let index = dir.cf_index();
        if index.exists() {
            let body = std::fs::read_to_string(&index).map_err(|e| load_err(&index, e))?;
            let files: BTreeMap<String, String> = serde_json::from_str(&body).map_err(|e| load_err(&index, e))?;
            for (topic, name) in files {
                let path = dir.cf_dir().join(name);
                topic_models.insert(topic, FactorModel::load(&path).map_err(|e| load_err(&path, e))?);
            }
        }
        let external = if dir.external().exists() {
            let (corpus, _) = ingest(dir.external()).map_err(|e| load_err(&dir.external(), e))?;
            corpus.of_kind(DocKind::External).cloned().collect()
        } else {
            Vec::new()
        };
        Self::from_parts(provider, store, templates, topic_models, external)
    }
}
