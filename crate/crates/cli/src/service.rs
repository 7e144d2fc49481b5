//! Read-only HTTP service over prebuilt artifacts.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chainrag::pipeline::{PipelineConfig, Stores};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tracing::error;

use crate::payload::{answer_payload, retrieve_payload};

pub struct AppState {
    pub stores: Stores,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionRequest {
    question: String,
    #[serde(default)]
    k: Option<usize>,
}

fn bad_request(message: impl Into<String>) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": message.into() }))).into_response()
}

fn internal(detail: impl std::fmt::Display) -> Response {
    let id = uuid::Uuid::new_v4().to_string();
    error!(error_id = %id, error = %detail, "request failed");
    (
        StatusCode::INTERNAL_SERVER_ERROR,
        Json(json!({ "error": "internal error", "id": id })),
    )
        .into_response()
}

fn parse(body: &[u8], default_k: usize) -> Result<(String, usize), String> {
    let req: QuestionRequest = serde_json::from_slice(body).map_err(|e| format!("invalid body: {e}"))?;
    if req.question.trim().is_empty() {
        return Err("question must be non-empty".into());
    }
    let k = req.k.unwrap_or(default_k);
    if k == 0 {
        return Err("k must be >= 1".into());
    }
    Ok((req.question, k))
}

async fn run_blocking<T, F>(state: Arc<AppState>, body: Bytes, f: F) -> Response
where
    T: serde::Serialize + Send + 'static,
    F: FnOnce(&AppState, &str, usize) -> chainrag::Result<T> + Send + 'static,
{
    let (question, k) = match parse(&body, state.pipeline.final_docs) {
        Ok(v) => v,
        Err(message) => return bad_request(message),
    };
    match tokio::task::spawn_blocking(move || f(&state, &question, k)).await {
        Ok(Ok(payload)) => Json(payload).into_response(),
        Ok(Err(e)) => internal(e),
        Err(e) => internal(e),
    }
}

async fn retrieve(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    run_blocking(state, body, |s, q, k| {
        retrieve_payload(&s.stores, &s.pipeline, q, k).map(|(p, _)| p)
    })
    .await
}

async fn answer(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    run_blocking(state, body, |s, q, k| answer_payload(&s.stores, &s.pipeline, q, k).map(|(p, _)| p)).await
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/retrieve", post(retrieve))
        .route("/answer", post(answer))
        .route("/healthz", get(healthz))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
