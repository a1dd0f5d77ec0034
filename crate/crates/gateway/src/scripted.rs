use std::path::Path;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::{Backend, ChatRequest, ChatResponse, GatewayError, HashEmbedder};

/// One recorded exchange. `request_digest` is optional: when present it must
/// equal [`ChatRequest::digest`] of the request replayed at that position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(default)]
    pub request_digest: Option<String>,
    #[serde(deserialize_with = "response_or_text")]
    pub response: ChatResponse,
}

impl TranscriptEntry {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            request_digest: None,
            response: ChatResponse::text(content),
        }
    }
}

fn response_or_text<'de, D>(de: D) -> Result<ChatResponse, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        Text(String),
        Full(ChatResponse),
    }
    Ok(match Either::deserialize(de)? {
        Either::Text(t) => ChatResponse::text(t),
        Either::Full(r) => r,
    })
}

/// Ordered list of canned exchanges (a JSON array on disk).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            entries: texts.into_iter().map(TranscriptEntry::text).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        serde_json::from_str(text).map_err(|e| GatewayError::TranscriptLoad(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::TranscriptLoad(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Replays a [`Transcript`] by call position.
///
/// Access to the cursor is serialised, so one backend may be shared across
/// threads; the order of calls still determines which response each gets.
/// Embeddings come from [`HashEmbedder`] and never consume transcript entries.
#[derive(Debug)]
pub struct ScriptedBackend {
    transcript: Transcript,
    cursor: Mutex<usize>,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self {
            transcript,
            cursor: Mutex::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Number of chat calls served so far.
    pub fn calls(&self) -> usize {
        *self.cursor.lock()
    }

    pub fn remaining(&self) -> usize {
        self.transcript.len().saturating_sub(self.calls())
    }

    /// Requests received so far, in order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().clone()
    }
}

impl Backend for ScriptedBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut cursor = self.cursor.lock();
        let position = *cursor;
        let entry =
            self.transcript
                .entries
                .get(position)
                .ok_or(GatewayError::TranscriptExhausted {
                    position,
                    len: self.transcript.len(),
                })?;
        if let Some(expected) = &entry.request_digest {
            let actual = request.digest();
            if *expected != actual {
                return Err(GatewayError::TranscriptDiverged {
                    position,
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        *cursor += 1;
        self.log.lock().push(request.clone());
        Ok(entry.response.clone())
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, GatewayError> {
        Ok(HashEmbedder.embed(text))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
