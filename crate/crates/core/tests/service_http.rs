mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use casa::service::{router, EventLog, ServiceMode};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value =
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()));
    (status, value)
}

#[tokio::test(flavor = "multi_thread")]
async fn review_flow_over_http() {
    let (controller, _bridge) = common::session(ServiceMode::Review, EventLog::in_memory()).await;
    let app = router(Arc::new(controller));

    let (s, state) = send(&app, "GET", "/state", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(state["devices"]["living_room"]["lights"]["hue_group"]["state"], "off");

    let (s, p) = send(&app, "POST", "/command", Some(json!({ "text": "gotta relax" }))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(p["status"], "pending");
    let id = p["id"].as_str().unwrap().to_owned();
    assert_eq!(p["changeset"]["changes"].as_array().unwrap().len(), 3);

    let (s, got) = send(&app, "GET", &format!("/proposals/{id}"), None).await;
    assert_eq!((s, &got), (StatusCode::OK, &p));

    let (s, done) = send(&app, "POST", &format!("/proposals/{id}/approve"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(done["status"], "applied");
    let (_, state) = send(&app, "GET", "/state", None).await;
    assert_eq!(
        state["devices"]["living_room"]["lights"]["hue_group"],
        json!({"state": "on", "brightness": 64, "effect": "none"})
    );
    assert_eq!(state["devices"]["living_room"]["plugs"]["stereo"]["state"], "on");

    let (s, err) = send(&app, "POST", &format!("/proposals/{id}/reject"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "not_pending");

    let (s, p2) = send(&app, "POST", "/command", Some(json!({ "text": "I'm leaving" }))).await;
    assert_eq!(s, StatusCode::CREATED);
    let id2 = p2["id"].as_str().unwrap();
    let (_, r) = send(&app, "POST", &format!("/proposals/{id2}/reject"), None).await;
    assert_eq!(r["status"], "rejected");

    let (_, list) = send(&app, "GET", "/proposals?limit=1", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["id"], id2);
    let (_, list) = send(&app, "GET", "/proposals", None).await;
    assert_eq!(list.as_array().unwrap().len(), 2);

    let (_, events) = send(&app, "GET", "/events", None).await;
    let events = events.as_array().unwrap();
    let kinds: Vec<&str> = events.iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "command_received").count(), 2);
    assert!(kinds.contains(&"proposal_applied") && kinds.contains(&"proposal_rejected"));
    let last_seq = events.last().unwrap()["seq"].as_u64().unwrap();
    let (_, tail) = send(&app, "GET", &format!("/events?since={}", last_seq - 1), None).await;
    assert_eq!(tail.as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn error_responses() {
    let (controller, _bridge) = common::session(ServiceMode::Review, EventLog::in_memory()).await;
    let app = router(Arc::new(controller));
    let (s, e) = send(&app, "POST", "/command", Some(json!({ "text": "  " }))).await;
    assert_eq!(
        (s, e["error"].as_str()),
        (StatusCode::BAD_REQUEST, Some("empty_command"))
    );
    let (s, e) = send(&app, "GET", "/proposals/nope", None).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (s, _) = send(&app, "POST", "/proposals/nope/approve", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = send(&app, "POST", "/command", Some(json!({ "txt": "x" }))).await;
    assert!(s.is_client_error());
}

#[tokio::test(flavor = "multi_thread")]
async fn cors_headers() {
    let (controller, _bridge) = common::session(ServiceMode::Review, EventLog::in_memory()).await;
    let app = router(Arc::new(controller));
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/command")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::NO_CONTENT);
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
    let req = Request::builder().uri("/state").body(Body::empty()).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
