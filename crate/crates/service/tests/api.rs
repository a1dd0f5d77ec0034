use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use base64::Engine;
use http_body_util::BodyExt;
use pipewright_agents::{AgentConfig, ModelRegistry, Status};
use pipewright_core::ir::json::{parse_pipeline_json, pipeline_from_value};
use pipewright_core::ir::{FunctionCatalog, Pipeline};
use pipewright_core::metrics::{exact_match, MatchConfig};
use pipewright_gateway::{Gateway, Transcript};
use pipewright_service::{router, AppState, SessionStore};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixtures() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures"]
        .iter()
        .collect()
}

fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap()
}

fn fixture(name: &str) -> Pipeline {
    parse_pipeline_json(&fixture_text(name), FunctionCatalog::builtin()).unwrap()
}

fn app(data: &std::path::Path, transcript: Option<&str>) -> (Router, Arc<SessionStore>) {
    let transcript = match transcript {
        Some(name) => Transcript::load(fixtures().join("transcripts").join(name)).unwrap(),
        None => Transcript::default(),
    };
    let store = Arc::new(SessionStore::open(data).unwrap());
    let state = AppState {
        store: store.clone(),
        gateway: Gateway::scripted(transcript),
        catalog: Arc::new(FunctionCatalog::builtin().clone()),
        registry: Arc::new(ModelRegistry::builtin()),
        agents: AgentConfig::default(),
    };
    (router(state), store)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn wait_until_finished(app: &Router, id: &str) -> Vec<Value> {
    let mut since = 0;
    let mut events = Vec::new();
    for _ in 0..100 {
        let (status, page) = call(
            app,
            Method::GET,
            &format!("/sessions/{id}/events?since={since}&wait_ms=200"),
            None,
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        since = page["next"].as_u64().unwrap();
        events.extend(page["events"].as_array().unwrap().iter().cloned());
        let finished = events.iter().any(|e| {
            e["event"]["type"] == "failed"
                || (e["event"]["type"] == "status_changed" && e["event"]["status"] == "done")
        });
        if finished {
            return events;
        }
    }
    panic!("session {id} did not finish: {events:#?}");
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_conversation_over_http_yields_the_dubbing_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path(), Some("dubbing.json"));

    let (status, created) = call(&app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap().to_string();

    let video = base64::engine::general_purpose::STANDARD.encode(b"not really a video");
    let (status, reply) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/messages"),
        Some(json!({"text": "Dub my video.", "attachments": [{"file_name": "talk.mp4", "modality": "video", "content": video}]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{reply}");
    assert!(reply["refined_query"].is_null());

    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/pipeline"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, reply) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/messages"),
        Some(json!({"text": "It is in English. French, German and Spanish please."})),
    )
    .await;
    assert!(reply["refined_query"].as_str().unwrap().contains("Spanish"));

    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/confirm"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let events = wait_until_finished(&app, &id).await;
    let seqs: Vec<u64> = events.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1) && seqs[0] == 1);
    assert!(events.iter().any(|e| e["event"]["type"] == "draft"));

    let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}/pipeline"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let p = pipeline_from_value(body["pipeline"].clone(), FunctionCatalog::builtin()).unwrap();
    assert!(exact_match(&p, &fixture("figure1.json"), &MatchConfig::default()).matched);
    assert_eq!(body["degraded"], false);

    let (status, body) = call(&app, Method::POST, &format!("/sessions/{id}/confirm"), None).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");

    let (_, state) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(state["attachment_inputs"]["talk.mp4"], "Video file");
    let content_ref = state["attachments"][0]["content_ref"].as_str().unwrap();
    let blob = dir
        .path()
        .join("blobs")
        .join(content_ref.trim_start_matches("sha256:"));
    assert_eq!(std::fs::read(blob).unwrap(), b"not really a video");

    // a restarted service rebuilds the session from its log
    let reopened = SessionStore::open(dir.path()).unwrap();
    let again = reopened.get(&id).unwrap();
    let session = again.state.lock().await;
    assert_eq!(session.status, Status::Done);
    assert_eq!(again.last_seq(), *seqs.last().unwrap());
    assert!(
        exact_match(
            &session.result.as_ref().unwrap().pipeline,
            &p,
            &MatchConfig::default()
        )
        .matched
    );
}

#[tokio::test]
async fn utility_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path(), None);
    let fig5a: Value = serde_json::from_str(&fixture_text("figure5a.json")).unwrap();
    let (status, report) = call(
        &app,
        Method::POST,
        "/validate",
        Some(json!({ "pipeline": fig5a })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["is_valid"], false);
    assert!(report["issues"]
        .as_array()
        .unwrap()
        .iter()
        .any(|i| i["code"] == "DUP_OUTPUT"));

    let c: Value = serde_json::from_str(&fixture_text("figure9c.json")).unwrap();
    let d: Value = serde_json::from_str(&fixture_text("figure9d.json")).unwrap();
    let (status, body) = call(
        &app,
        Method::POST,
        "/evaluate",
        Some(json!({ "generated": c, "reference": d, "config": { "time_budget_ms": 5000 } })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["exact_match"], false);
    assert_eq!(body["ged"]["distance"], 3.0);

    let (status, _) = call(
        &app,
        Method::POST,
        "/validate",
        Some(json!({ "pipeline": { "edges": [] } })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(
        &app,
        Method::POST,
        "/evaluate",
        Some(json!({ "generated": c, "reference": d, "config": { "colour": 1 } })),
    )
    .await;
    assert!(status.is_client_error());
    let (status, _) = call(&app, Method::GET, "/sessions/nope/events", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn gateway_failure_is_reported_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let (app, store) = app(dir.path(), None);
    let (_, created) = call(&app, Method::POST, "/sessions", None).await;
    let id = created["id"].as_str().unwrap();
    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/messages"),
        Some(json!({"text": "hi"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_GATEWAY, "{body}");
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/confirm"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    // the user's message is kept even though no reply came back
    assert_eq!(store.get(id).unwrap().last_seq(), 1);
    tokio::time::sleep(Duration::from_millis(1)).await;
}

#[test]
fn interrupted_build_is_marked_failed_on_restart() {
    use pipewright_agents::{AgentEvent, Session};
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    let api = store.create();
    let mut s = Session::new(api.id.clone());
    s.record(AgentEvent::UserMessage {
        text: "q".into(),
        attachments: vec![],
    });
    s.record(AgentEvent::RefinedQuery { text: "q".into() });
    s.record(AgentEvent::Confirmed);
    s.record(AgentEvent::StatusChanged {
        status: Status::Building,
    });
    api.persist(&mut s).unwrap();
    // simulate a crash in the middle of a write
    let log = dir
        .path()
        .join("sessions")
        .join(format!("{}.jsonl", api.id));
    std::fs::OpenOptions::new()
        .append(true)
        .open(&log)
        .and_then(|mut f| std::io::Write::write_all(&mut f, b"{\"seq\": 5, \"ev"))
        .unwrap();

    let reopened = SessionStore::open(dir.path()).unwrap();
    let again = reopened.get(&api.id).unwrap();
    let session = again.state.try_lock().unwrap();
    assert_eq!(session.status, Status::Failed);
    assert_eq!(again.last_seq(), 5);
    drop(session);
    // and the repaired log opens cleanly a second time
    assert_eq!(
        SessionStore::open(dir.path())
            .unwrap()
            .get(&api.id)
            .unwrap()
            .last_seq(),
        5
    );
}
