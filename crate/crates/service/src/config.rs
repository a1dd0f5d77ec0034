use std::path::{Path, PathBuf};

use pipewright_agents::{AgentConfig, ModelRegistry, RegistryError};
use pipewright_core::ir::{CatalogError, FunctionCatalog};
use pipewright_gateway::GatewayConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Service settings, read from TOML. Every field has a default, and
/// `PIPEWRIGHT_*` variables override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Session logs and attachment blobs live here.
    pub data_dir: PathBuf,
    /// Function catalog JSON; the built-in catalog when unset.
    pub catalog: Option<PathBuf>,
    /// Model registry JSON; the built-in registry when unset.
    pub registry: Option<PathBuf>,
    /// Replay this transcript instead of calling a live endpoint.
    pub transcript: Option<PathBuf>,
    pub max_iterations: usize,
    pub question_budget: usize,
    pub gateway: GatewayConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let agents = AgentConfig::default();
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("pipewright-data"),
            catalog: None,
            registry: None,
            transcript: None,
            max_iterations: agents.max_iterations,
            question_budget: agents.question_budget,
            gateway: GatewayConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn with_env(self) -> Self {
        self.with_lookup(|k| std::env::var(k).ok())
    }

    pub fn with_lookup(mut self, lookup: impl Fn(&str) -> Option<String>) -> Self {
        if let Some(v) = lookup("PIPEWRIGHT_BIND") {
            self.bind = v;
        }
        if let Some(v) = lookup("PIPEWRIGHT_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = lookup("PIPEWRIGHT_CATALOG") {
            self.catalog = Some(v.into());
        }
        if let Some(v) = lookup("PIPEWRIGHT_REGISTRY") {
            self.registry = Some(v.into());
        }
        if let Some(v) = lookup("PIPEWRIGHT_TRANSCRIPT") {
            self.transcript = Some(v.into());
        }
        if let Some(v) = lookup("PIPEWRIGHT_MAX_ITERATIONS").and_then(|v| v.parse().ok()) {
            self.max_iterations = v;
        }
        self.gateway = self.gateway.with_lookup(lookup);
        self
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            max_iterations: self.max_iterations,
            question_budget: self.question_budget,
        }
    }

    pub fn load_catalog(&self) -> Result<FunctionCatalog, ConfigError> {
        Ok(match &self.catalog {
            Some(path) => FunctionCatalog::load(path)?,
            None => FunctionCatalog::builtin().clone(),
        })
    }

    pub fn load_registry(&self) -> Result<ModelRegistry, ConfigError> {
        let Some(path) = &self.registry else {
            return Ok(ModelRegistry::builtin());
        };
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.clone(),
            source,
        })?;
        Ok(ModelRegistry::from_json(&text)?)
    }
}
