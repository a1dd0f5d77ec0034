//! Provider-agnostic access to chat-completion and embedding endpoints.
//!
//! Every LLM call in the workspace goes through [`Gateway`], which pairs a
//! [`Backend`] with the model name to use for each agent role. Two backends
//! ship here:
//!
//! * [`HttpBackend`] speaks the chat-completions JSON dialect over HTTP with
//!   bounded exponential-backoff retries.
//! * [`ScriptedBackend`] replays a transcript of canned responses by request
//!   position and fails loudly when the conversation diverges. The default
//!   test suites use only this one.

mod config;
mod embedding;
mod error;
mod live;
mod scripted;
mod types;

pub use config::{GatewayConfig, ModelRoles};
pub use embedding::{cosine_similarity, HashEmbedder, EMBEDDING_DIM};
pub use error::GatewayError;
pub use live::{HttpBackend, RetryPolicy};
pub use scripted::{ScriptedBackend, Transcript, TranscriptEntry};
pub use types::{ChatRequest, ChatResponse, FinishReason, Message, Role, Usage};

use std::sync::Arc;

/// A chat-completion and embedding provider.
pub trait Backend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    fn embed(&self, text: &str) -> Result<Vec<f32>, GatewayError>;

    /// Short name used in logs.
    fn name(&self) -> &str;
}

/// Which agent is calling. Each role maps to a configurable model name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentRole {
    Clarifier,
    Builder,
    Inspector,
    Utility,
}

/// Shared handle over a backend plus per-role model names.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    models: ModelRoles,
    temperature: f32,
    max_tokens: u32,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.name())
            .field("models", &self.models)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, models: ModelRoles) -> Self {
        Self {
            backend,
            models,
            temperature: 0.0,
            max_tokens: 2048,
        }
    }

    /// Gateway over a scripted transcript with default model names.
    pub fn scripted(transcript: Transcript) -> Self {
        Self::new(
            Arc::new(ScriptedBackend::new(transcript)),
            ModelRoles::default(),
        )
    }

    pub fn with_sampling(mut self, temperature: f32, max_tokens: u32) -> Self {
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn models(&self) -> &ModelRoles {
        &self.models
    }

    /// Builds a request for `role` and sends it.
    pub fn chat(
        &self,
        role: AgentRole,
        messages: Vec<Message>,
    ) -> Result<ChatResponse, GatewayError> {
        let request = ChatRequest {
            model: self.models.for_role(role).to_string(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        request.validate()?;
        self.backend.chat(&request)
    }

    /// Convenience for the common system-plus-one-user-turn shape.
    pub fn ask(&self, role: AgentRole, system: &str, user: &str) -> Result<String, GatewayError> {
        let response = self.chat(role, vec![Message::system(system), Message::user(user)])?;
        Ok(response.content)
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f32>, GatewayError> {
        self.backend.embed(text)
    }
}
