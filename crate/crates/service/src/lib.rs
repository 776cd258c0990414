//! HTTP session API over the discovery engine.
//!
//! Sessions live in `<data_dir>/sessions/<id>/` as `session.json`,
//! `checkpoint.json`, `history.jsonl` and `idempotency.json`. Every mutation
//! is written to disk before its response is sent, and mutations of one
//! session are serialized by a per-session lock.
//!
//! | method | path | |
//! |---|---|---|
//! | `GET` | `/sessions` | list handles |
//! | `POST` | `/sessions` | create a session |
//! | `GET` | `/sessions/{id}` | checkpoint snapshot |
//! | `POST` | `/sessions/{id}/advance` | run to the next proposal |
//! | `GET` | `/sessions/{id}/clusters/current` | pending proposal |
//! | `POST` | `/sessions/{id}/label` | answer the pending proposal |
//! | `GET` | `/sessions/{id}/report` | evaluation report |
//! | `GET` | `/crops/...` | crop images under `<data_dir>/crops` |

pub mod error;
mod store;
pub mod views;

use std::net::SocketAddr;
use std::path::Path;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::services::ServeDir;

pub use error::{ApiError, ApiResult, Problem};
pub use store::{AppState, CreateSessionRequest, SessionHandle, SplitParams};
pub use views::{
    AdvanceResponse, LabelRequest, LabelResponse, MemberView, PointRole, PointView, ProposalView,
};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

fn idempotency_key(headers: &HeaderMap) -> ApiResult<Option<String>> {
    match headers.get(IDEMPOTENCY_HEADER) {
        None => Ok(None),
        Some(v) => v
            .to_str()
            .ok()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Some(s.to_string()))
            .ok_or_else(|| ApiError::bad_request("invalid_idempotency_key", "idempotency key must be visible ASCII")),
    }
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<SessionHandle>> {
    Json(app.handles().await)
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateSessionRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionHandle>)> {
    let Json(req) = body.map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))?;
    let handle = app.create(req).await?;
    tracing::info!(session = %handle.session_id, "session created");
    Ok((StatusCode::CREATED, Json(handle)))
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let entry = app.entry(&id).await?;
    Ok(json_text(entry.checkpoint_json()?))
}

async fn advance(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> ApiResult<Json<serde_json::Value>> {
    let key = idempotency_key(&headers)?;
    let mut entry = app.entry(&id).await?;
    let crops = app.crops_dir().to_path_buf();
    let body = blocking(move || entry.advance(key, &crops)).await?;
    Ok(Json(body))
}

async fn current_cluster(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<ProposalView>> {
    let entry = app.entry(&id).await?;
    let crops = app.crops_dir().to_path_buf();
    Ok(Json(blocking(move || entry.current(&crops)).await?))
}

async fn label(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Result<Json<LabelRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Json(req) = body.map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))?;
    let key = idempotency_key(&headers)?;
    let mut entry = app.entry(&id).await?;
    Ok(Json(blocking(move || entry.label(req, key)).await?))
}

async fn report(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let mut entry = app.entry(&id).await?;
    let report = blocking(move || entry.report()).await?;
    let text = serde_json::to_string(&report).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(json_text(text))
}

async fn fallback() -> ApiError {
    ApiError::not_found("route_not_found", "no such route")
}

pub fn router(app: AppState) -> Router {
    let crops = ServeDir::new(app.crops_dir());
    Router::new()
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/clusters/current", get(current_cluster))
        .route("/sessions/{id}/label", post(label))
        .route("/sessions/{id}/report", get(report))
        .nest_service("/crops", crops)
        .fallback(fallback)
        .with_state(app)
}

/// Bind `addr` and serve sessions stored under `data_dir` until the
/// process stops.
pub async fn serve(addr: SocketAddr, data_dir: &Path) -> std::io::Result<()> {
    let app = AppState::open(data_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
