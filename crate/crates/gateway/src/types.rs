use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Messages must be non-empty and alternate user/assistant after an
    /// optional leading system turn, starting with a user turn.
    pub fn validate(&self) -> Result<(), GatewayError> {
        let mut turns = self.messages.iter().peekable();
        if turns.peek().is_none() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if turns.peek().map(|m| m.role) == Some(Role::System) {
            turns.next();
        }
        let mut expected = Role::User;
        let mut seen_turn = false;
        for (i, message) in turns.enumerate() {
            if message.role != expected {
                return Err(GatewayError::InvalidRequest(format!(
                    "turn {i} has role {:?}, expected {:?}",
                    message.role, expected
                )));
            }
            seen_turn = true;
            expected = if expected == Role::User {
                Role::Assistant
            } else {
                Role::User
            };
        }
        if !seen_turn {
            return Err(GatewayError::InvalidRequest(
                "request has a system turn but no user turn".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 over the model name and the role/content sequence.
    ///
    /// Sampling parameters are excluded so that tuning them does not
    /// invalidate recorded transcripts.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model.as_bytes());
        for message in &self.messages {
            hasher.update([0u8]);
            hasher.update(
                match message.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                }
                .as_bytes(),
            );
            hasher.update([0u8]);
            hasher.update(message.content.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    #[default]
    Stop,
    Length,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    #[serde(default)]
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub usage: Usage,
}

impl ChatResponse {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            finish_reason: FinishReason::Stop,
            usage: Usage::default(),
        }
    }
}
