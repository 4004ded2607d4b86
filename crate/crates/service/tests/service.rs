use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use procline_core::persist::load_base;
use procline_core::session::Session;
use procline_service::{router, AppState, SharedState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn state(snapshots: Option<PathBuf>) -> SharedState {
    AppState::new(load_base(&fixture("process_base.json")).unwrap(), snapshots).unwrap()
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body.to_string())).await
}

fn characteristics() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("characteristics.json")).unwrap()).unwrap()
}

fn at(minute: u32) -> String {
    format!("2004-11-17T10:{minute:02}:00+01:00")
}

/// A session in phase tailoring with `emergent-small` selected.
async fn tailoring_session(app: &Router, id: &str) {
    let (status, _) = post(app, "/sessions", json!({ "id": id })).await;
    assert_eq!(status, StatusCode::CREATED);
    let actions = [
        json!({ "type": "select-top-k", "characteristics": characteristics(), "k": 2 }),
        json!({ "type": "cut", "level": 2 }),
    ];
    for (i, action) in actions.into_iter().enumerate() {
        let (status, body) =
            post(app, &format!("/sessions/{id}/actions"), json!({ "at": at(i as u32), "action": action })).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let (status, body) =
        post(app, "/selection", json!({ "session": id, "variant_id": "emergent-small", "at": at(2) })).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["phase"], "tailoring");
}

#[tokio::test]
async fn read_only_endpoints() {
    let app = router(state(None));
    let (status, base) = get(&app, "/variants").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(base["variants"].as_array().unwrap().len(), 5);

    let (status, ranking) = post(&app, "/selection", json!({ "characteristics": characteristics(), "k": 2 })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ranking[0]["variant_id"], "emergent-large");

    let (status, cut) = get(&app, "/line/cut?level=1").await;
    assert_eq!((status, &cut["members"]), (StatusCode::OK, &json!(["v-model-outline"])));
    let (status, body) = get(&app, "/line/cut?level=zero").await;
    assert_eq!((status, body["error"]["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid-query")));
    let (status, _) = get(&app, "/line/cut").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, diff) = get(&app, "/line/diff?variant=emergent-small").await;
    assert_eq!(status, StatusCode::OK);
    assert!(!diff["extra_objects"].as_array().unwrap().is_empty());
    let (status, _) = get(&app, "/line/diff?variant=ghost").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn guarded_removal_needs_approval() {
    let app = router(state(None));
    tailoring_session(&app, "guard").await;
    let key = json!({ "kind": "task", "name": "new statechart modeling" });
    let (status, body) = post(
        &app,
        "/sessions/guard/actions",
        json!({ "type": "tailor", "change": { "action": "remove-object", "key": key } }),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "approval-required");
    assert_eq!(body["error"]["target"], key);

    let (_, unchanged) = get(&app, "/sessions/guard").await;
    assert_eq!(unchanged["transcript"].as_array().unwrap().len(), 3);
    assert!(unchanged["ledger"].as_array().unwrap().is_empty());

    let approval = json!({ "approver": "lead", "justification": "done by the supplier" });
    let (status, body) = post(
        &app,
        "/sessions/guard/actions",
        json!({ "at": at(3), "action": { "type": "tailor", "change": { "action": "remove-object", "key": key, "approval": approval } } }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["ledger"].as_array().unwrap().len(), 1);
    assert!(!body["consistency"].as_array().unwrap().is_empty());

    let (status, body) = post(&app, "/sessions/guard/actions", json!({ "type": "finish" })).await;
    assert_eq!((status, body["error"]["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("phase-illegal")));
    let (status, body) = post(&app, "/sessions/guard/actions", json!({ "type": "teleport" })).await;
    assert_eq!((status, body["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("parse-error")));
    let (status, _) = post(&app, "/sessions/nobody/actions", json!({ "type": "finish" })).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn session_ids_are_checked() {
    let app = router(state(None));
    let (status, first) = call(&app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(first["phase"], "selecting");
    let (status, _) = post(&app, "/sessions", json!({ "id": first["id"] })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = post(&app, "/sessions", json!({ "id": "../escape" })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn log_discovery_delta_and_refinement() {
    let app = router(state(None));
    let text = std::fs::read_to_string(fixture("event_log.txt")).unwrap();
    let (status, parsed) = call(&app, Method::POST, "/logs", Some(text.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parsed["warnings"].as_array().unwrap().len(), 1);
    let log = parsed["log"].clone();

    let (status, performed) = post(&app, "/discovery", log.clone()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(performed["objects"].as_array().unwrap().len(), 5);

    let (_, base) = get(&app, "/variants").await;
    let prescriptive =
        base["variants"].as_array().unwrap().iter().find(|v| v["id"] == "emergent-small").unwrap().clone();
    let (status, delta) = post(&app, "/delta", json!({ "prescriptive": prescriptive, "log": log })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(delta["extra_objects"], json!([{ "kind": "task", "name": "panel change" }]));

    let add =
        json!([{ "target": { "kind": "object", "key": { "kind": "task", "name": "panel change" } }, "action": "add" }]);
    let (status, refined) = post(
        &app,
        "/refinement/decisions",
        json!({ "prescriptive": prescriptive, "log": log, "decisions": add, "at": at(0) }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{refined}");
    assert_eq!(refined["delta"]["extra_objects"], json!([]));

    // the same through a session
    tailoring_session(&app, "reflect").await;
    post(&app, "/sessions/reflect/actions", json!({ "type": "start-execution" })).await;
    let (status, body) = post(&app, "/sessions/reflect/actions", json!({ "type": "ingest-log", "log": log })).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["phase"], "reflecting");
    let (status, body) = post(&app, "/refinement/decisions", json!({ "session": "reflect", "decisions": add })).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["delta"]["extra_objects"], json!([]));

    let remove = json!([{ "target": { "kind": "object", "key": { "kind": "task", "name": "statechart change" } }, "action": "remove" }]);
    let (status, body) =
        post(&app, "/refinement/decisions", json!({ "session": "reflect", "decisions": remove })).await;
    assert_eq!(status, StatusCode::OK, "{body}");
}

#[tokio::test]
async fn concurrent_actions_on_one_session_are_serialized() {
    let app = router(state(None));
    tailoring_session(&app, "busy").await;
    let mut handles = Vec::new();
    for i in 0..24 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let object = json!({ "id": format!("t-extra-{i}"), "kind": "task", "name": format!("Extra step {i}") });
            post(
                &app,
                "/sessions/busy/actions",
                json!({ "type": "tailor", "change": { "action": "add-object", "object": object } }),
            )
            .await
        }));
    }
    for handle in handles {
        assert_eq!(handle.await.unwrap().0, StatusCode::OK);
    }
    let (_, body) = get(&app, "/sessions/busy").await;
    let transcript = body["transcript"].as_array().unwrap();
    assert_eq!(transcript.len(), 3 + 24);
    let names: std::collections::BTreeSet<&str> = body["working"]["objects"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|o| o["name"].as_str())
        .filter(|n| n.starts_with("Extra step"))
        .collect();
    assert_eq!(names.len(), 24);

    // the transcript alone rebuilds the same session
    let entries: Vec<procline_core::session::TranscriptEntry> =
        serde_json::from_value(body["transcript"].clone()).unwrap();
    let base = load_base(&fixture("process_base.json")).unwrap().variants;
    let replayed = Session::replay("busy", base, &entries).unwrap();
    assert_eq!(serde_json::to_value(&replayed.working).unwrap(), body["working"]);
}

#[tokio::test]
async fn snapshots_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let first = state(Some(dir.path().to_path_buf()));
    let app = router(first.clone());
    tailoring_session(&app, "durable").await;
    let approval = json!({ "approver": "lead", "justification": "done by the supplier" });
    let key = json!({ "kind": "task", "name": "new statechart modeling" });
    post(
        &app,
        "/sessions/durable/actions",
        json!({ "type": "tailor", "change": { "action": "remove-object", "key": key, "approval": approval } }),
    )
    .await;
    assert_eq!(first.snapshot().await.unwrap(), 1);
    let (_, before) = get(&app, "/sessions/durable").await;

    let restarted = router(state(Some(dir.path().to_path_buf())));
    let (status, after) = get(&restarted, "/sessions/durable").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after, before);
    assert_eq!(after["ledger"].as_array().unwrap().len(), 1);
}
