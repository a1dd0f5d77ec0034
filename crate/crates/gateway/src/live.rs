use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::{Backend, ChatRequest, ChatResponse, FinishReason, GatewayError, Usage};

/// Bounded exponential backoff.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    /// Per-attempt timeout.
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.min(16));
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }

    /// Runs `op` until it succeeds, fails permanently, or the retry cap is
    /// hit. `op` receives the 1-based attempt number; `sleep` is injected so
    /// tests can observe the schedule without waiting.
    pub fn run<T>(
        &self,
        mut op: impl FnMut(u32) -> Result<T, GatewayError>,
        mut sleep: impl FnMut(Duration),
    ) -> Result<T, GatewayError> {
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt <= self.max_retries => {
                    tracing::warn!(attempt, error = %e, "transient gateway failure, retrying");
                    sleep(self.backoff(attempt - 1));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Chat-completions client over blocking HTTP.
#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    embedding_model: String,
    policy: RetryPolicy,
}

impl HttpBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        embedding_model: impl Into<String>,
        policy: RetryPolicy,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(policy.timeout)
            .build()
            .map_err(|e| GatewayError::NotConfigured(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.filter(|k| !k.is_empty()),
            embedding_model: embedding_model.into(),
            policy,
        })
    }

    fn post(
        &self,
        path: &str,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value, GatewayError> {
        let url = format!("{}/{}", self.base_url, path);
        self.policy.run(
            |attempt| {
                let mut req = self.client.post(&url).json(body);
                if let Some(key) = &self.api_key {
                    req = req.bearer_auth(key);
                }
                let response = req.send().map_err(|e| {
                    if e.is_timeout() {
                        GatewayError::Timeout { attempts: attempt }
                    } else {
                        GatewayError::Transport {
                            message: e.to_string(),
                            attempts: attempt,
                        }
                    }
                })?;
                let status = response.status();
                if !status.is_success() {
                    return Err(GatewayError::Status {
                        status: status.as_u16(),
                        body: response.text().unwrap_or_default(),
                        attempts: attempt,
                    });
                }
                response
                    .json::<serde_json::Value>()
                    .map_err(|e| GatewayError::MalformedResponse(e.to_string()))
            },
            std::thread::sleep,
        )
    }
}

#[derive(Deserialize)]
struct WireChat {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

#[derive(Deserialize)]
struct WireEmbeddings {
    data: Vec<WireEmbedding>,
}

#[derive(Deserialize)]
struct WireEmbedding {
    embedding: Vec<f32>,
}

pub(crate) fn parse_chat(value: serde_json::Value) -> Result<ChatResponse, GatewayError> {
    let wire: WireChat = serde_json::from_value(value)
        .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::MalformedResponse("no choices".into()))?;
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Other,
    };
    let usage = wire
        .usage
        .map(|u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        })
        .unwrap_or_default();
    Ok(ChatResponse {
        content: choice.message.content.unwrap_or_default(),
        finish_reason,
        usage,
    })
}

impl Backend for HttpBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        parse_chat(self.post("chat/completions", &body)?)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, GatewayError> {
        let body = json!({ "model": self.embedding_model, "input": text });
        let wire: WireEmbeddings = serde_json::from_value(self.post("embeddings", &body)?)
            .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        wire.data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| GatewayError::MalformedResponse("no embedding returned".into()))
    }

    fn name(&self) -> &str {
        "http"
    }
}
