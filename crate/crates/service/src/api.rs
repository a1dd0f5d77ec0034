//! JSON-over-HTTP API. Agent calls block on the gateway, so they run on
//! the blocking pool while holding the session's lock.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use pipewright_agents::{
    confirm, mentalist_turn, run_after_confirm, AgentConfig, AgentError, Attachment, ModelRegistry,
    Session, Status,
};
use pipewright_core::ir::json::pipeline_from_value;
use pipewright_core::ir::{FunctionCatalog, Modality, Pipeline};
use pipewright_core::metrics::{evaluate_pair, Hooks, MatchConfig};
use pipewright_core::validator::validate;
use pipewright_gateway::{Gateway, GatewayError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::store::{ApiSession, LoggedEvent, SessionStore};

/// Longest a `GET .../events` call waits for new events.
const MAX_WAIT: Duration = Duration::from_secs(30);

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub gateway: Gateway,
    pub catalog: Arc<FunctionCatalog>,
    pub registry: Arc<ModelRegistry>,
    pub agents: AgentConfig,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/confirm", post(post_confirm))
        .route("/sessions/{id}/events", get(get_events))
        .route("/sessions/{id}/pipeline", get(get_pipeline))
        .route("/validate", post(post_validate))
        .route("/evaluate", post(post_evaluate))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    extra: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            extra: Value::Null,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let status = match &e {
            AgentError::InvalidState { .. }
            | AgentError::AlreadyConfirmed
            | AgentError::NothingToConfirm
            | AgentError::TurnLimit(_) => StatusCode::CONFLICT,
            AgentError::Gateway(GatewayError::NotConfigured(_)) => StatusCode::SERVICE_UNAVAILABLE,
            AgentError::Gateway(_) | AgentError::Malformed { .. } => StatusCode::BAD_GATEWAY,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let (Value::Object(extra), Some(map)) = (self.extra, body.as_object_mut()) {
            map.extend(extra);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn session(state: &AppState, id: &str) -> ApiResult<Arc<ApiSession>> {
    state.store.get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn create_session(State(state): State<AppState>) -> (StatusCode, Json<Value>) {
    let s = state.store.create();
    (StatusCode::CREATED, Json(json!({ "id": s.id })))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let api = session(&state, &id)?;
    let s = api.state.lock().await;
    Ok(Json(json!({
        "id": s.id,
        "status": s.status,
        "messages": s.messages,
        "refined_query": s.refined_query,
        "confirmed": s.confirmed,
        "specification": s.specification,
        "attachments": s.attachments,
        "attachment_inputs": s.attachment_inputs,
        "flagged_attachments": s.flagged_attachments,
        "iteration_count": s.iteration_count,
        "failure": s.failure,
        "last_event": api.last_seq(),
    })))
}

#[derive(Debug, Deserialize)]
pub struct AttachmentUpload {
    pub file_name: String,
    pub modality: Modality,
    /// File contents, base64.
    pub content: String,
}

#[derive(Debug, Deserialize)]
pub struct MessageBody {
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<AttachmentUpload>,
}

#[derive(Debug, Serialize)]
struct MessageReply {
    reply: String,
    refined_query: Option<String>,
    status: Status,
}

async fn post_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<MessageBody>,
) -> ApiResult<Json<Value>> {
    let api = session(&state, &id)?;
    let mut attachments = Vec::new();
    for a in body.attachments {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(a.content.as_bytes())
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("{}: {e}", a.file_name)))?;
        let content_ref = state.store.put_blob(&bytes).map_err(ApiError::internal)?;
        attachments.push(Attachment {
            file_name: a.file_name,
            modality: a.modality,
            content_ref,
            message_index: 0,
        });
    }
    let guard = api.state.clone().lock_owned().await;
    let reply = tokio::task::spawn_blocking(move || {
        let mut session = guard;
        let result = mentalist_turn(
            &mut session,
            &body.text,
            attachments,
            &state.gateway,
            &state.agents,
        );
        api.persist(&mut session).map_err(ApiError::internal)?;
        let reply = result?;
        Ok::<_, ApiError>(MessageReply {
            reply: reply.reply,
            refined_query: reply.refined_query,
            status: session.status,
        })
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(Json(serde_json::to_value(reply).expect("reply serializes")))
}

async fn post_confirm(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let api = session(&state, &id)?;
    let mut guard = api.state.clone().lock_owned().await;
    confirm(&mut guard)?;
    api.persist(&mut guard).map_err(ApiError::internal)?;

    // the build runs in the background; progress is read from the events
    let worker = api.clone();
    tokio::task::spawn_blocking(move || {
        let mut session = guard;
        let result = run_after_confirm(
            &mut session,
            &state.gateway,
            &state.catalog,
            &state.registry,
            &state.agents,
        );
        if let Err(e) = &result {
            tracing::warn!(session = %worker.id, error = %e, "build failed");
        }
        if let Err(e) = worker.write_events(&mut session) {
            tracing::error!(session = %worker.id, error = %e, "could not persist events");
        }
        // readers woken by the final events must find the session unlocked
        drop(session);
        worker.notify();
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "id": id, "confirmed": true })),
    ))
}

#[derive(Debug, Deserialize)]
pub struct EventsQuery {
    #[serde(default)]
    pub since: u64,
    /// Milliseconds to wait for new events when there are none yet.
    #[serde(default)]
    pub wait_ms: u64,
}

#[derive(Debug, Serialize)]
struct EventPage {
    events: Vec<LoggedEvent>,
    /// Pass as `since` to get the following page.
    next: u64,
}

async fn get_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> ApiResult<Json<Value>> {
    let api = session(&state, &id)?;
    let events = if q.wait_ms == 0 {
        api.events_since(q.since)
    } else {
        api.wait_for(q.since, Duration::from_millis(q.wait_ms).min(MAX_WAIT))
            .await
    };
    let next = events.last().map_or(q.since, |e| e.seq);
    Ok(Json(
        serde_json::to_value(EventPage { events, next }).expect("events serialize"),
    ))
}

async fn get_pipeline(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let api = session(&state, &id)?;
    // a running build holds the lock; answer from the log instead of waiting
    let s = match api.state.try_lock() {
        Ok(s) => s.clone(),
        Err(_) => {
            let log = api.events_since(0);
            Session::replay(id.as_str(), log.iter().map(|e| &e.event))
        }
    };
    match (&s.result, s.status) {
        (Some(result), Status::Done) => Ok(Json(json!({
            "pipeline": result.pipeline,
            "degraded": result.degraded,
        }))),
        (_, status) => Err(not_ready(&status.to_string())),
    }
}

fn not_ready(status: &str) -> ApiError {
    let mut e = ApiError::new(StatusCode::CONFLICT, "pipeline is not ready");
    e.extra = json!({ "status": status });
    e
}

fn parse_pipeline(value: Value, catalog: &FunctionCatalog, what: &str) -> ApiResult<Pipeline> {
    pipeline_from_value(value, catalog)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("{what}: {e}")))
}

#[derive(Debug, Deserialize)]
pub struct ValidateBody {
    pub pipeline: Value,
}

async fn post_validate(
    State(state): State<AppState>,
    Json(body): Json<ValidateBody>,
) -> ApiResult<Json<Value>> {
    let p = parse_pipeline(body.pipeline, &state.catalog, "pipeline")?;
    let report = validate(&p, &state.catalog);
    Ok(Json(
        serde_json::to_value(report).expect("report serializes"),
    ))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateOptions {
    pub prompt_similarity_threshold: Option<f64>,
    pub time_budget_ms: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct EvaluateBody {
    pub generated: Value,
    pub reference: Value,
    #[serde(default)]
    pub config: EvaluateOptions,
}

async fn post_evaluate(
    State(state): State<AppState>,
    Json(body): Json<EvaluateBody>,
) -> ApiResult<Json<Value>> {
    let generated = parse_pipeline(body.generated, &state.catalog, "generated")?;
    let reference = parse_pipeline(body.reference, &state.catalog, "reference")?;
    let mut cfg = MatchConfig::default();
    if let Some(t) = body.config.prompt_similarity_threshold {
        cfg.prompt_similarity_threshold = t;
    }
    if let Some(ms) = body.config.time_budget_ms {
        cfg.time_budget = Duration::from_millis(ms);
    }
    cfg.validate()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let (exact_match, ged) = tokio::task::spawn_blocking(move || {
        evaluate_pair(&generated, &reference, &cfg, Hooks::offline())
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(ApiError::internal)?;
    Ok(Json(json!({ "exact_match": exact_match, "ged": ged })))
}
