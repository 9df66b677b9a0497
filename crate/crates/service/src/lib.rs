//! HTTP JSON API: OA upload, recommendation slates, template search and
//! fill, prompt-budgeted generation, interaction logging and engagement.

pub mod error;
pub mod layout;
mod routes;
pub mod stores;

use std::collections::BTreeMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::Router;
use oa_core::config::{BackendKind, Config};
use oa_core::events::EventLog;
use oa_core::generation::{GenerationBackend, MockBackend, RemoteBackend};
use oa_core::parser::{BiblioInfo, KeywordConfig, TechKeywords};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use error::{ApiError, ErrorBody};
pub use layout::DataDir;
pub use stores::{StoreError, Stores};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("event log: {0}")]
    Events(#[from] oa_core::events::EventError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("api key variable {0} is configured but not set")]
    MissingApiKey(String),
    #[error("keep list {path}: {source}")]
    KeepList {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("remote backends are disabled by configuration")]
    RemoteDisabled,
    #[error("server error: {0}")]
    Server(#[from] std::io::Error),
}

/// An uploaded office action with its parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OaRecord {
    pub oa_id: String,
    pub text: String,
    pub biblio: BiblioInfo,
    pub keywords: TechKeywords,
}

pub struct AppState {
    pub stores: Stores,
    pub config: Config,
    pub backend: Arc<dyn GenerationBackend>,
    pub keyword_config: KeywordConfig,
    pub events: Mutex<EventLog>,
    pub oas: RwLock<BTreeMap<String, OaRecord>>,
    pub prompts: RwLock<BTreeMap<String, String>>,
    /// Prompts are also written here, one file per prompt id.
    pub audit_dir: Option<PathBuf>,
    pub api_key: Option<String>,
    pub requests: Mutex<BTreeMap<String, u64>>,
}

impl AppState {
    pub fn new(stores: Stores, config: Config, backend: Arc<dyn GenerationBackend>, events: EventLog) -> Self {
        let keyword_config = KeywordConfig { claims_boost: config.keywords.claims_boost, ..KeywordConfig::default() };
        AppState {
            stores,
            config,
            backend,
            keyword_config,
            events: Mutex::new(events),
            oas: RwLock::new(BTreeMap::new()),
            prompts: RwLock::new(BTreeMap::new()),
            audit_dir: None,
            api_key: None,
            requests: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_audit_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.audit_dir = dir;
        self
    }

    pub fn with_keyword_config(mut self, config: KeywordConfig) -> Self {
        self.keyword_config = config;
        self
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    routes::router(state)
}

pub fn backend_from_config(config: &Config) -> Result<Arc<dyn GenerationBackend>, ServeError> {
    match config.generation.backend {
        BackendKind::Mock => Ok(Arc::new(MockBackend::default())),
        BackendKind::Remote if !config.remote_enabled => Err(ServeError::RemoteDisabled),
        BackendKind::Remote => Ok(Arc::new(RemoteBackend::new(config.generation.remote.clone()))),
    }
}

/// Loads every store named by `config`, binds, and serves until `shutdown`
/// resolves. The event log is synced before returning.
pub async fn serve(config: Config, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
    let dir = DataDir::new(&config.service.data_dir);
    let stores = Stores::load(&dir, &config)?;
    let events = EventLog::open(dir.events())?;
    let backend = backend_from_config(&config)?;
    let api_key = match &config.service.api_key_env {
        Some(var) => Some(std::env::var(var).map_err(|_| ServeError::MissingApiKey(var.clone()))?),
        None => None,
    };
    let mut keyword_config = KeywordConfig { claims_boost: config.keywords.claims_boost, ..KeywordConfig::default() };
    if let Some(path) = &config.keywords.keep_list_file {
        let body = std::fs::read_to_string(path).map_err(|source| ServeError::KeepList { path: path.clone(), source })?;
        keyword_config = keyword_config.with_keep_lines(&body);
    }
    let addr = config.service.bind.clone();
    let state = Arc::new(
        AppState::new(stores, config, backend, events)
            .with_api_key(api_key)
            .with_audit_dir(Some(dir.prompts()))
            .with_keyword_config(keyword_config),
    );
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr: addr.clone(), source })?;
    log::info!("listening on {addr}");
    axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown).await?;
    state.events.lock().unwrap_or_else(|p| p.into_inner()).flush()?;
    Ok(())
}
