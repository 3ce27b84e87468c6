use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::manager::{CreateSession, PendingView, Session, SessionManager, Snapshot};
use crate::engine::Status;
use crate::error::Error;
use crate::recommender::{Preference, Vote};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::InvalidArgument(_) | Error::Dimension(_) | Error::NonFinite(_) | Error::IndexOutOfRange { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_argument")
            }
            Error::Format(_) | Error::Json(_) | Error::DegenerateSpectrum(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            Error::State(_) | Error::MissingTarget => (StatusCode::CONFLICT, "conflict"),
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => (StatusCode::NOT_FOUND, "not_found"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
pub struct VoteBody {
    pub vote: i64,
    pub preference: f64,
    #[serde(default)]
    pub pending_id: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct SatisfactionBody {
    pub satisfied: bool,
    #[serde(default)]
    pub pending_id: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct ExportBody {
    pub path: PathBuf,
}

#[derive(Debug, Deserialize)]
pub struct MapQuery {
    #[serde(default = "default_map_kind")]
    pub kind: String,
}

fn default_map_kind() -> String {
    "mean".into()
}

#[derive(Debug, Serialize)]
struct MapBody {
    kind: String,
    rows: usize,
    cols: usize,
    iteration: usize,
    values: Vec<f64>,
}

fn session(manager: &SessionManager, id: &str) -> Result<Arc<Session>, ApiError> {
    manager.get(id).ok_or_else(|| ApiError::not_found(&format!("no session {id}")))
}

/// Resumes the session on the blocking pool when it can make progress.
fn spawn_driver(session: Arc<Session>) {
    if session.snapshot().status == Status::Running {
        tokio::task::spawn_blocking(move || session.drive());
    }
}

async fn create(
    State(manager): State<Arc<SessionManager>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Snapshot>), ApiError> {
    let Json(req) = body?;
    let manager2 = manager.clone();
    let session = tokio::task::spawn_blocking(move || manager2.create(req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let snapshot = session.snapshot();
    spawn_driver(session);
    Ok((StatusCode::CREATED, Json(snapshot)))
}

async fn state(State(manager): State<Arc<SessionManager>>, Path(id): Path<String>) -> ApiResult<Snapshot> {
    Ok(Json(session(&manager, &id)?.snapshot()))
}

async fn spectrum(State(manager): State<Arc<SessionManager>>, Path(id): Path<String>) -> Result<Json<PendingView>, ApiError> {
    match session(&manager, &id)?.snapshot().pending {
        Some(p @ PendingView::AwaitVote { .. }) => Ok(Json(p)),
        _ => Err(ApiError::new(StatusCode::CONFLICT, "conflict", "no spectrum is awaiting a vote")),
    }
}

async fn target(State(manager): State<Arc<SessionManager>>, Path(id): Path<String>) -> ApiResult<serde_json::Value> {
    let snap = session(&manager, &id)?.snapshot();
    Ok(Json(json!({ "target": snap.target, "phase": snap.phase, "vote_weight": snap.vote_weight })))
}

async fn maps(
    State(manager): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    Query(q): Query<MapQuery>,
) -> ApiResult<MapBody> {
    let snap = session(&manager, &id)?.snapshot();
    let maps = snap.maps.ok_or_else(|| ApiError::not_found("no maps yet"))?;
    let values = match q.kind.as_str() {
        "mean" => Some(maps.mean),
        "variance" => Some(maps.variance),
        "truth" => maps.truth,
        "error" => maps.error,
        other => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_argument",
                format!("unknown map kind {other:?}; expected mean, variance, truth or error"),
            ))
        }
    };
    let values = values.ok_or_else(|| ApiError::not_found(&format!("no {} map until the target is frozen", q.kind)))?;
    Ok(Json(MapBody { kind: q.kind, rows: maps.rows, cols: maps.cols, iteration: snap.iteration, values }))
}

async fn vote(
    State(manager): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    body: Result<Json<VoteBody>, JsonRejection>,
) -> ApiResult<Snapshot> {
    let s = session(&manager, &id)?;
    let Json(body) = body?;
    let vote = Vote::new(body.vote)?;
    let preference = Preference::new(body.preference)?;
    let snapshot = s.submit_vote(body.pending_id, vote, preference)?;
    spawn_driver(s);
    Ok(Json(snapshot))
}

async fn satisfaction(
    State(manager): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    body: Result<Json<SatisfactionBody>, JsonRejection>,
) -> ApiResult<Snapshot> {
    let s = session(&manager, &id)?;
    let Json(body) = body?;
    let snapshot = s.submit_satisfaction(body.pending_id, body.satisfied)?;
    spawn_driver(s);
    Ok(Json(snapshot))
}

async fn abort(State(manager): State<Arc<SessionManager>>, Path(id): Path<String>) -> ApiResult<Snapshot> {
    let s = session(&manager, &id)?;
    // Waits for an in-flight step to finish, so run it off the async workers.
    let snap = tokio::task::spawn_blocking(move || s.abort())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(Json(snap))
}

async fn export(
    State(manager): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    body: Result<Json<ExportBody>, JsonRejection>,
) -> ApiResult<serde_json::Value> {
    let s = session(&manager, &id)?;
    let Json(body) = body?;
    let path = body.path.clone();
    let s2 = s.clone();
    tokio::task::spawn_blocking(move || s2.export(&path))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let snap = s.snapshot();
    Ok(Json(json!({
        "path": body.path,
        "status": snap.status,
        "aborted": snap.status == Status::Aborted,
    })))
}

/// The versioned API, mounted under `/api/v1`.
pub fn router(manager: Arc<SessionManager>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/spectrum", get(spectrum))
        .route("/sessions/{id}/target", get(target))
        .route("/sessions/{id}/maps", get(maps))
        .route("/sessions/{id}/vote", post(vote))
        .route("/sessions/{id}/satisfaction", post(satisfaction))
        .route("/sessions/{id}/abort", post(abort))
        .route("/sessions/{id}/export", post(export))
        .with_state(manager);
    Router::new().nest("/api/v1", api)
}

/// Serves the API until the process is stopped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(SessionManager::new()))).await
}
