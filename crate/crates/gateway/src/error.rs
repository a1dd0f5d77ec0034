use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },

    #[error("endpoint returned status {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        body: String,
        attempts: u32,
    },

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },

    #[error("malformed response from endpoint: {0}")]
    MalformedResponse(String),

    #[error("transcript exhausted: call #{position} but only {len} entries recorded")]
    TranscriptExhausted { position: usize, len: usize },

    #[error("transcript diverged at call #{position}: expected digest {expected}, got {actual}")]
    TranscriptDiverged {
        position: usize,
        expected: String,
        actual: String,
    },

    #[error("failed to load transcript: {0}")]
    TranscriptLoad(String),

    #[error("gateway not configured: {0}")]
    NotConfigured(String),
}

impl GatewayError {
    /// Whether retrying the same request might succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::Timeout { .. } | GatewayError::Transport { .. } => true,
            GatewayError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}
