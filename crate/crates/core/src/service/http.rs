//! JSON-over-HTTP interface to a [`Controller`].
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/state` | current home context |
//! | POST | `/command` | `{"text": ...}`, returns the proposal |
//! | GET | `/proposals?limit=N` | newest first, default 50 |
//! | GET | `/proposals/{id}` | |
//! | POST | `/proposals/{id}/approve` | |
//! | POST | `/proposals/{id}/reject` | |
//! | GET | `/events?since=SEQ` | event log tail |

use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{Controller, Decision, ServiceError};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, class) = match &self {
            ServiceError::EmptyCommand => (StatusCode::BAD_REQUEST, "empty_command"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::NotPending { .. } => (StatusCode::CONFLICT, "not_pending"),
            ServiceError::Backend { source, .. } => (StatusCode::BAD_GATEWAY, source.class()),
            ServiceError::Config(_) | ServiceError::Replay(_) | ServiceError::Io(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        let mut body = json!({ "error": class, "message": self.to_string() });
        if let ServiceError::Backend { proposal, .. } = &self {
            body["proposal"] = json!(proposal);
        }
        (status, Json(body)).into_response()
    }
}

#[derive(Deserialize)]
struct CommandBody {
    text: String,
}

#[derive(Deserialize)]
struct Limit {
    limit: Option<usize>,
}

#[derive(Deserialize)]
struct Since {
    since: Option<u64>,
}

type Shared = State<Arc<Controller>>;

async fn state(State(c): Shared) -> impl IntoResponse {
    Json(c.get_state().to_json())
}

async fn command(State(c): Shared, Json(body): Json<CommandBody>) -> Result<impl IntoResponse, ServiceError> {
    let p = c.handle_command(&body.text).await?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn proposals(State(c): Shared, Query(q): Query<Limit>) -> impl IntoResponse {
    Json(c.get_history(q.limit.unwrap_or(50)))
}

async fn proposal(State(c): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    c.get_proposal(&id).map(Json).ok_or(ServiceError::NotFound(id))
}

async fn approve(State(c): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(c.resolve_proposal(&id, Decision::Approve).await?))
}

async fn reject(State(c): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(c.resolve_proposal(&id, Decision::Reject).await?))
}

async fn events(State(c): Shared, Query(q): Query<Since>) -> impl IntoResponse {
    Json(c.events().since(q.since.unwrap_or(0)))
}

/// Permissive CORS so a browser dashboard on another port can call in.
async fn cors(req: Request, next: Next) -> Response {
    let mut resp = if req.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(req).await
    };
    let h = resp.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("GET, POST, OPTIONS"),
    );
    h.insert(
        header::ACCESS_CONTROL_ALLOW_HEADERS,
        HeaderValue::from_static("content-type"),
    );
    resp
}

pub fn router(controller: Arc<Controller>) -> Router {
    Router::new()
        .route("/state", get(state))
        .route("/command", post(command))
        .route("/proposals", get(proposals))
        .route("/proposals/{id}", get(proposal))
        .route("/proposals/{id}/approve", post(approve))
        .route("/proposals/{id}/reject", post(reject))
        .route("/events", get(events))
        .layer(middleware::from_fn(cors))
        .with_state(controller)
}
