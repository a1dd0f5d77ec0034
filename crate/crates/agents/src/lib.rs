//! The agent loop that turns a conversation into a pipeline.
//!
//! A [`Session`] moves through clarification ([`mentalist_turn`]), an
//! explicit confirmation ([`confirm`]), and then [`run_after_confirm`]:
//! specification extraction, attachment matching, the build/inspect loop
//! and model matching. Every state change is recorded as an
//! [`AgentEvent`], so a session can be rebuilt from its event log.
//!
//! All model calls go through a [`pipewright_gateway::Gateway`]; with a
//! scripted gateway every step is deterministic.

mod attachments;
mod builder;
mod extractor;
mod inspector;
mod matchmaker;
mod mentalist;
pub mod prompts;
mod reply;
mod run;
mod script;
mod session;

pub use attachments::{match_attachments, AttachmentMatch};
pub use builder::{builder_build, builder_repair, BuildRequest};
pub use extractor::extract_specification;
pub use inspector::{
    branch_summary, inspector_semantics, inspector_syntax, SemanticIssue, SyntaxInspection,
};
pub use matchmaker::{
    extract_preferences, make_generic_node, matchmaker_assign, ModelEntry, ModelPreference,
    ModelRegistry, RegistryError,
};
pub use mentalist::{confirm, mentalist_turn, MentalistReply};
pub use run::{run_after_confirm, run_loop, LoopOutcome};
pub use script::{generate_script, render_script};
pub use session::{AgentEvent, Attachment, Draft, FinalPipeline, Session, Speaker, Status, Turn};

use pipewright_core::ir::SpecificationError;
use pipewright_gateway::GatewayError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentConfig {
    /// Builder calls allowed per session (first build plus repairs).
    pub max_iterations: usize,
    /// User turns the clarifier may take before giving up.
    pub question_budget: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            question_budget: 8,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{stage}: model reply could not be used: {message}")]
    Malformed {
        stage: &'static str,
        message: String,
    },
    #[error(transparent)]
    Specification(#[from] SpecificationError),
    #[error("no refined query after {0} user turns")]
    TurnLimit(usize),
    #[error("session is {actual}, expected {expected}")]
    InvalidState { expected: Status, actual: Status },
    #[error("there is no refined query to confirm")]
    NothingToConfirm,
    #[error("the refined query was already confirmed")]
    AlreadyConfirmed,
    #[error("task description is empty")]
    EmptyTask,
    #[error("generic LLM nodes only handle text to text, not {0}")]
    UnsupportedFallback(String),
}
