//! Pipeline and service configuration: one JSON file, every key optional,
//! with `OAE__SECTION__KEY=value` environment overrides.
//!
//! Override values are parsed as JSON when possible (`8`, `true`, `[10,20]`)
//! and taken as plain strings otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cascade::{DEFAULT_BLEND_WEIGHT, DEFAULT_K};
use crate::cf::{CfMethod, CfParams};
use crate::embedding::{RemoteConfig, DEFAULT_DIM};
use crate::events::DepthWeights;
use crate::generation::{Priorities, RemoteGenConfig};
use crate::valuation::ValuationConfig;

pub const ENV_PREFIX: &str = "OAE__";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment override {var}: {message}")]
    Env { var: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    pub grid: Vec<usize>,
    pub iterations: usize,
    pub eta: f64,
    pub alpha: Option<f64>,
    pub top_n: usize,
    pub min_count: u32,
}

impl Default for LdaSection {
    fn default() -> Self {
        LdaSection { grid: vec![10, 20, 40, 80, 120, 160, 200], iterations: 200, eta: 0.01, alpha: None, top_n: 10, min_count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelphiSection {
    pub lambda: f64,
    pub theta: f64,
    pub max_rounds: usize,
}

impl Default for DelphiSection {
    fn default() -> Self {
        DelphiSection { lambda: 4.0, theta: 0.7, max_rounds: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Local,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: ProviderKind,
    pub dim: usize,
    pub remote: RemoteConfig,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection { provider: ProviderKind::Local, dim: DEFAULT_DIM, remote: RemoteConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfSection {
    pub als: CfParams,
    pub bpr: CfParams,
}

impl Default for CfSection {
    fn default() -> Self {
        CfSection { als: CfParams::default(), bpr: CfParams { method: CfMethod::Bpr, ..CfParams::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendSection {
    pub k: usize,
    pub blend_weight: f64,
}

impl Default for RecommendSection {
    fn default() -> Self {
        RecommendSection { k: DEFAULT_K, blend_weight: DEFAULT_BLEND_WEIGHT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeywordSection {
    /// Extra keep-list terms, one per line.
    pub keep_list_file: Option<String>,
    pub claims_boost: f64,
    pub top_n: usize,
}

impl Default for KeywordSection {
    fn default() -> Self {
        KeywordSection { keep_list_file: None, claims_boost: 2.0, top_n: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub backend: BackendKind,
    pub budget: usize,
    pub token_ratio: f64,
    pub role: Option<String>,
    pub priorities: Priorities,
    pub relevant_top_n: usize,
    pub remote: RemoteGenConfig,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            backend: BackendKind::Mock,
            budget: 4096,
            token_ratio: 1.3,
            role: None,
            priorities: Priorities::default(),
            relevant_top_n: 3,
            remote: RemoteGenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    /// Environment variable holding the API key; no key means no check.
    pub api_key_env: Option<String>,
    pub data_dir: String,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection { bind: "127.0.0.1:8080".into(), api_key_env: None, data_dir: "data".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsSection {
    pub weights: DepthWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Off means no text leaves the machine: remote embedding and
    /// generation backends refuse to start.
    pub remote_enabled: bool,
    pub seed: u64,
    pub lda: LdaSection,
    pub delphi: DelphiSection,
    pub valuation: ValuationConfig,
    pub embedding: EmbeddingSection,
    pub cf: CfSection,
    pub recommend: RecommendSection,
    pub keywords: KeywordSection,
    pub generation: GenerationSection,
    pub events: EventsSection,
    pub service: ServiceSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            remote_enabled: true,
            seed: 0,
            lda: LdaSection::default(),
            delphi: DelphiSection::default(),
            valuation: ValuationConfig::default(),
            embedding: EmbeddingSection::default(),
            cf: CfSection::default(),
            recommend: RecommendSection::default(),
            keywords: KeywordSection::default(),
            generation: GenerationSection::default(),
            events: EventsSection::default(),
            service: ServiceSection::default(),
        }
    }
}

impl Config {
    /// File (if given) plus overrides from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut tree = match path {
            Some(p) => {
                let body = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
                serde_json::from_str(&body).map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        let mut overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (var, raw) in overrides {
            apply_override(&mut tree, &var, &raw)?;
        }
        let config: Config = serde_json::from_value(tree).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.valuation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for p in [&self.cf.als, &self.cf.bpr] {
            p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if !(0.0..=1.0).contains(&self.recommend.blend_weight) {
            return bad(format!("recommend.blend_weight {} outside [0, 1]", self.recommend.blend_weight));
        }
        if self.recommend.k == 0 {
            return bad("recommend.k must be >= 1".into());
        }
        if !(self.generation.token_ratio > 0.0) {
            return bad("generation.token_ratio must be > 0".into());
        }
        if !(self.delphi.lambda > 1.0 && self.delphi.lambda < 5.0) || !(self.delphi.theta > 0.0 && self.delphi.theta < 1.0) {
            return bad("delphi.lambda must be in (1, 5) and delphi.theta in (0, 1)".into());
        }
        if !self.remote_enabled
            && (self.embedding.provider == ProviderKind::Remote || self.generation.backend == BackendKind::Remote)
        {
            return bad("a remote backend is selected but remote_enabled is false".into());
        }
        Ok(())
    }
}

fn apply_override(tree: &mut Value, var: &str, raw: &str) -> Result<(), ConfigError> {
    let err = |message: &str| ConfigError::Env { var: var.to_string(), message: message.to_string() };
    let path: Vec<String> = var[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
    if path.iter().any(String::is_empty) {
        return Err(err("empty key segment"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    for (i, key) in path.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            _ => return Err(err(&format!("{} is not a section", path[..i].join(".")))),
        };
        if i + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        node = obj.entry(key.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path has at least one segment")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_round_trip() {
        let c = Config::load_with_env(None, env(&[])).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.recommend.k, 10);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Config>(&json).unwrap(), c);
    }

    #[test]
    fn file_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"generation": {"budget": 1000}, "cf": {"als": {"factors": 8}}}"#).unwrap();
        let c = Config::load_with_env(
            Some(&path),
            env(&[
                ("OAE__GENERATION__BUDGET", "2048"),
                ("OAE__GENERATION__REMOTE__MODEL", "patent-lm"),
                ("OAE__LDA__GRID", "[10,20]"),
                ("OTHER", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(c.generation.budget, 2048);
        assert_eq!(c.generation.remote.model, "patent-lm");
        assert_eq!(c.cf.als.factors, 8);
        assert_eq!(c.cf.als.reg, 0.1);
        assert_eq!(c.lda.grid, vec![10, 20]);
    }

    #[test]
    fn rejects_typos_and_bad_values() {
        assert!(Config::load_with_env(None, env(&[("OAE__RECOMEND__K", "5")])).is_err());
        assert!(Config::load_with_env(None, env(&[("OAE__RECOMMEND__BLEND_WEIGHT", "1.5")])).is_err());
        assert!(Config::load_with_env(None, env(&[("OAE__SEED__X", "1")])).is_err());
        assert!(matches!(
            Config::load_with_env(None, env(&[("OAE__LDA____ETA", "1")])),
            Err(ConfigError::Env { .. })
        ));
        assert!(matches!(
            Config::load_with_env(None, env(&[("OAE__SEED", "1"), ("OAE__SEED__X", "1")])),
            Err(ConfigError::Env { .. })
        ));
        let missing = Config::load_with_env(Some(Path::new("/nonexistent/c.json")), env(&[])).unwrap_err();
        assert!(missing.to_string().contains("/nonexistent/c.json"));
    }

    #[test]
    fn remote_switch() {
        let off = env(&[("OAE__REMOTE_ENABLED", "false"), ("OAE__GENERATION__BACKEND", "remote")]);
        assert!(Config::load_with_env(None, off).unwrap_err().to_string().contains("remote_enabled"));
        let ok = Config::load_with_env(None, env(&[("OAE__REMOTE_ENABLED", "false")])).unwrap();
        assert!(!ok.remote_enabled);
    }
}
