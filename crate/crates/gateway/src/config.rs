use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{AgentRole, GatewayError, HttpBackend, RetryPolicy};

/// Model name per agent role. Defaults mirror the split where the clarifier
/// and builder use a large hosted model and the remaining roles a smaller
/// open-weights one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelRoles {
    pub clarifier: String,
    pub builder: String,
    pub inspector: String,
    pub utility: String,
    pub embedding: String,
}

impl Default for ModelRoles {
    fn default() -> Self {
        Self {
            clarifier: "gpt-4o".into(),
            builder: "gpt-4o".into(),
            inspector: "llama-3.1-70b-instruct".into(),
            utility: "llama-3.1-70b-instruct".into(),
            embedding: "all-MiniLM-L6-v2".into(),
        }
    }
}

impl ModelRoles {
    pub fn for_role(&self, role: AgentRole) -> &str {
        match role {
            AgentRole::Clarifier => &self.clarifier,
            AgentRole::Builder => &self.builder,
            AgentRole::Inspector => &self.inspector,
            AgentRole::Utility => &self.utility,
        }
    }
}

/// Settings for the live HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// Base URL of a chat-completions-compatible API, e.g.
    /// `https://api.openai.com/v1`.
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub models: ModelRoles,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            api_key: None,
            models: ModelRoles::default(),
            timeout_secs: 60,
            max_retries: 3,
            temperature: 0.0,
            max_tokens: 2048,
        }
    }
}

impl GatewayConfig {
    /// Overlays `PIPEWRIGHT_*` environment variables on top of `self`.
    pub fn with_env(self) -> Self {
        self.with_lookup(|k| std::env::var(k).ok())
    }

    pub fn with_lookup(mut self, lookup: impl Fn(&str) -> Option<String>) -> Self {
        if let Some(v) = lookup("PIPEWRIGHT_LLM_URL") {
            self.endpoint = Some(v);
        }
        if let Some(v) = lookup("PIPEWRIGHT_LLM_API_KEY") {
            self.api_key = Some(v);
        }
        let models = &mut self.models;
        for (key, slot) in [
            ("PIPEWRIGHT_MODEL_CLARIFIER", &mut models.clarifier),
            ("PIPEWRIGHT_MODEL_BUILDER", &mut models.builder),
            ("PIPEWRIGHT_MODEL_INSPECTOR", &mut models.inspector),
            ("PIPEWRIGHT_MODEL_UTILITY", &mut models.utility),
            ("PIPEWRIGHT_MODEL_EMBEDDING", &mut models.embedding),
        ] {
            if let Some(v) = lookup(key) {
                *slot = v;
            }
        }
        if let Some(v) = lookup("PIPEWRIGHT_LLM_TIMEOUT_SECS").and_then(|v| v.parse().ok()) {
            self.timeout_secs = v;
        }
        if let Some(v) = lookup("PIPEWRIGHT_LLM_RETRIES").and_then(|v| v.parse().ok()) {
            self.max_retries = v;
        }
        self
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            timeout: Duration::from_secs(self.timeout_secs.max(1)),
            ..RetryPolicy::default()
        }
    }

    pub fn http_backend(&self) -> Result<HttpBackend, GatewayError> {
        let endpoint = self
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::NotConfigured("PIPEWRIGHT_LLM_URL is not set".into()))?;
        HttpBackend::new(
            endpoint,
            self.api_key.clone(),
            self.models.embedding.clone(),
            self.retry_policy(),
        )
    }
}
