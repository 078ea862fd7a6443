//! In-process stand-in for a Hue bridge and a smart plug, listening on a
//! loopback port so adapter traffic crosses a real socket.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{Method as HttpMethod, StatusCode, Uri};
use axum::routing::{get, put};
use axum::{Json, Router};
use serde_json::{json, Map, Value};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use super::adapters::{Method, WireCommand};

#[derive(Default)]
struct BridgeState {
    groups: HashMap<String, Map<String, Value>>,
    plugs: HashMap<String, String>,
    received: Vec<WireCommand>,
}

type Shared = Arc<Mutex<BridgeState>>;

/// Running simulated bridge. The listener stops when this is dropped.
pub struct SimulatedBridge {
    addr: SocketAddr,
    state: Shared,
    task: JoinHandle<()>,
}

impl SimulatedBridge {
    /// Binds `127.0.0.1:0` and starts serving.
    pub async fn start() -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0").await
    }

    pub async fn bind(addr: &str) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let state: Shared = Arc::default();
        let app = router(state.clone());
        let task = tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!(error = %e, "simulated bridge stopped");
            }
        });
        Ok(Self { addr, state, task })
    }

    /// `http://127.0.0.1:<port>`
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Every write received, in arrival order, with bodies as sent.
    pub fn received(&self) -> Vec<WireCommand> {
        self.state.lock().unwrap().received.clone()
    }

    pub fn seed_group(&self, group_id: u32, action: Value) {
        if let Value::Object(m) = action {
            self.state.lock().unwrap().groups.insert(group_id.to_string(), m);
        }
    }

    pub fn seed_plug(&self, plug_id: &str, state: &str) {
        self.state
            .lock()
            .unwrap()
            .plugs
            .insert(plug_id.to_owned(), state.to_owned());
    }

    /// Runs until the listener task ends.
    pub async fn wait(self) {
        let _ = (&mut { self }.task).await;
    }
}

impl Drop for SimulatedBridge {
    fn drop(&mut self) {
        self.task.abort();
    }
}

fn router(state: Shared) -> Router {
    Router::new()
        .route("/groups/{id}", get(get_group))
        .route("/groups/{id}/action", put(put_group_action))
        .route("/plug/{id}", get(get_plug).put(put_plug))
        .with_state(state)
}

fn default_action() -> Map<String, Value> {
    let Value::Object(m) = json!({"on": false, "bri": 0, "effect": "none"}) else {
        unreachable!()
    };
    m
}

fn record(state: &mut BridgeState, method: &HttpMethod, uri: &Uri, body: &Bytes) {
    let method = match *method {
        HttpMethod::PUT => Method::Put,
        HttpMethod::POST => Method::Post,
        _ => Method::Get,
    };
    state.received.push(WireCommand {
        method,
        path: uri.path().to_owned(),
        body: String::from_utf8_lossy(body).into_owned(),
    });
}

async fn get_group(State(state): State<Shared>, Path(id): Path<String>) -> Json<Value> {
    let s = state.lock().unwrap();
    let action = s.groups.get(&id).cloned().unwrap_or_else(default_action);
    Json(json!({ "name": format!("Group {id}"), "action": action }))
}

async fn put_group_action(
    State(state): State<Shared>,
    Path(id): Path<String>,
    method: HttpMethod,
    uri: Uri,
    body: Bytes,
) -> (StatusCode, Json<Value>) {
    let mut s = state.lock().unwrap();
    record(&mut s, &method, &uri, &body);
    let Ok(Value::Object(update)) = serde_json::from_slice::<Value>(&body) else {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!([{"error": {"description": "body contains invalid json"}}])),
        );
    };
    let action = s.groups.entry(id.clone()).or_insert_with(default_action);
    let mut results = Vec::new();
    for (k, v) in update {
        results.push(json!({"success": { format!("/groups/{id}/action/{k}"): v.clone() }}));
        action.insert(k, v);
    }
    (StatusCode::OK, Json(Value::Array(results)))
}

async fn get_plug(State(state): State<Shared>, Path(id): Path<String>) -> Json<Value> {
    let s = state.lock().unwrap();
    let st = s.plugs.get(&id).cloned().unwrap_or_else(|| "off".into());
    Json(json!({ "state": st }))
}

async fn put_plug(
    State(state): State<Shared>,
    Path(id): Path<String>,
    method: HttpMethod,
    uri: Uri,
    body: Bytes,
) -> (StatusCode, Json<Value>) {
    let mut s = state.lock().unwrap();
    record(&mut s, &method, &uri, &body);
    match serde_json::from_slice::<Value>(&body)
        .ok()
        .as_ref()
        .and_then(|v| v.get("state"))
        .and_then(Value::as_str)
    {
        Some(st @ ("on" | "off")) => {
            s.plugs.insert(id, st.to_owned());
            (StatusCode::OK, Json(json!({ "state": st })))
        }
        _ => (
            StatusCode::BAD_REQUEST,
            Json(json!({"error": "expected {\"state\": \"on\"|\"off\"}"})),
        ),
    }
}
