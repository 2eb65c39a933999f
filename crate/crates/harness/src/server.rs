//! HTTP annotation backend.
//!
//! | method | path | result |
//! |---|---|---|
//! | GET | `/api/pairs/next?dimension=&annotator=` | `PairTask`, or 204 when done |
//! | POST | `/api/judgments` | 201, 409 on a duplicate, 400 on bad input |
//! | POST | `/api/judgments/supersede` | 200, 404 when nothing to replace |
//! | GET | `/api/judgments/export` | active judgments as JSONL |
//! | GET | `/api/progress` | per-dimension counts |
//! | GET | `/api/frames/{seq_id}/{index}` | `image/png` |
//! | GET | `/api/guidelines` | plain-text rubric |
//!
//! Anything else falls through to the static UI directory when one is set.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::services::ServeDir;

use recompose::annotation::{AnnotationError, AnnotationStore, Submission, GUIDELINES};
use recompose::pipeline::{frame_path, Manifest};
use recompose::Dimension;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<AnnotationStore>,
    pub manifest: Arc<Manifest>,
    /// Directory the manifest's frame paths are relative to.
    pub dataset: PathBuf,
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/pairs/next", get(next_pair))
        .route("/api/judgments", post(submit))
        .route("/api/judgments/supersede", post(supersede))
        .route("/api/judgments/export", get(export))
        .route("/api/progress", get(progress))
        .route("/api/frames/{seq_id}/{index}", get(frame))
        .route("/api/guidelines", get(guidelines))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn error(status: StatusCode, msg: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": msg.to_string() }))).into_response()
}

fn store_error(e: AnnotationError) -> Response {
    let status = match &e {
        AnnotationError::Conflict(..) => StatusCode::CONFLICT,
        AnnotationError::NothingToSupersede(..) => StatusCode::NOT_FOUND,
        AnnotationError::Io { .. } | AnnotationError::Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    };
    error(status, e)
}

async fn next_pair(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    let Some(dim) = q.get("dimension") else {
        return error(StatusCode::BAD_REQUEST, "missing dimension");
    };
    let dimension: Dimension = match dim.parse() {
        Ok(d) => d,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let annotator = match q.get("annotator").map(|a| a.trim()) {
        Some(a) if !a.is_empty() => a,
        _ => return error(StatusCode::BAD_REQUEST, "missing annotator"),
    };
    match s.store.next_pair(dimension, annotator) {
        Ok(Some(task)) => Json(task).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => store_error(e),
    }
}

async fn write_op(
    s: AppState,
    body: Bytes,
    op: fn(&AnnotationStore, &Submission) -> Result<recompose::Judgment, AnnotationError>,
    ok: StatusCode,
) -> Response {
    let sub: Submission = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    // fsync happens inside; keep it off the async workers
    match tokio::task::spawn_blocking(move || op(&s.store, &sub)).await {
        Ok(Ok(j)) => (ok, Json(j)).into_response(),
        Ok(Err(e)) => store_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn submit(State(s): State<AppState>, body: Bytes) -> Response {
    write_op(s, body, AnnotationStore::submit_raw, StatusCode::CREATED).await
}

async fn supersede(State(s): State<AppState>, body: Bytes) -> Response {
    write_op(s, body, AnnotationStore::supersede_raw, StatusCode::OK).await
}

async fn export(State(s): State<AppState>) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], s.store.export_string()).into_response()
}

async fn progress(State(s): State<AppState>) -> Response {
    Json(s.store.progress()).into_response()
}

async fn frame(State(s): State<AppState>, Path((seq_id, index)): Path<(String, usize)>) -> Response {
    let Some(rec) = s.manifest.get(&seq_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown sequence {seq_id:?}"));
    };
    if index >= rec.frame_count {
        return error(StatusCode::NOT_FOUND, format!("{seq_id} has {} frames", rec.frame_count));
    }
    match tokio::fs::read(frame_path(&s.dataset, rec, index)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn guidelines() -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], GUIDELINES).into_response()
}

pub async fn serve(state: AppState, static_dir: Option<PathBuf>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
