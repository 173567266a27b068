//! HTTP/JSON surface.
//!
//! | method | path | reply |
//! |---|---|---|
//! | POST | `/sessions` `{goal, config?}` | 201 `{session_id}` |
//! | GET | `/sessions` | session summaries |
//! | GET | `/sessions/{id}` | one summary |
//! | GET | `/sessions/{id}/events?from_seq=K` | server-sent events from seq K |
//! | POST | `/sessions/{id}/refine` `{text}` | 202 |
//! | POST | `/sessions/{id}/terminate` | 200 |
//! | GET | `/sessions/{id}/code/{version}` | script source |
//! | GET | `/sessions/{id}/renders/{set}/{view}` | PNG |
//!
//! Unknown ids are 404, phase violations 409 and malformed bodies 422.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::StreamExt;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::host::{HostError, SessionHost};

impl IntoResponse for HostError {
    fn into_response(self) -> Response {
        let status = match &self {
            HostError::NotFound(_) => StatusCode::NOT_FOUND,
            HostError::Conflict(_) => StatusCode::CONFLICT,
            HostError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            HostError::Internal(e) => {
                tracing::error!("{e:#}");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        let message = match &self {
            HostError::Internal(e) => format!("{e:#}"),
            other => other.to_string(),
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

type AppState = Arc<SessionHost>;

pub fn router(host: Arc<SessionHost>) -> Router {
    let ui = host.env.config.ui_dir.clone();
    let mut app = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_summary))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/refine", post(refine))
        .route("/sessions/{id}/terminate", post(terminate))
        .route("/sessions/{id}/code/{version}", get(code))
        .route("/sessions/{id}/renders/{set}/{view}", get(render_view))
        .with_state(host);
    if let Some(dir) = ui {
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app
}

fn body<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, HostError> {
    serde_json::from_slice(bytes).map_err(|e| HostError::Unprocessable(format!("malformed body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    goal: String,
    #[serde(default)]
    config: serde_json::Value,
}

async fn create_session(State(host): State<AppState>, bytes: Bytes) -> Result<impl IntoResponse, HostError> {
    let req: CreateBody = body(&bytes)?;
    let h = host.clone();
    let handle = tokio::task::spawn_blocking(move || h.create(&req.goal, &req.config))
        .await
        .map_err(|e| HostError::Internal(e.into()))??;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": handle.id }))))
}

async fn list_sessions(State(host): State<AppState>) -> impl IntoResponse {
    Json(host.list())
}

async fn session_summary(State(host): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, HostError> {
    Ok(Json(host.get(&id)?.summary()))
}

#[derive(Deserialize)]
struct EventsQuery {
    from_seq: Option<u64>,
}

async fn events(
    State(host): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<impl IntoResponse, HostError> {
    let handle = host.get(&id)?;
    // A reconnecting EventSource sends the last id it saw.
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(|seq| seq + 1);
    let from = q.from_seq.or(resume).unwrap_or(1);
    let stream = handle.stream(from).map(|e| {
        Ok::<_, Infallible>(SseEvent::default().id(e.seq.to_string()).event(format!("{:?}", e.kind)).data(e.to_line()))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RefineBody {
    text: String,
}

async fn refine(State(host): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> Result<impl IntoResponse, HostError> {
    host.get(&id)?;
    let req: RefineBody = body(&bytes)?;
    host.refine(&id, &req.text)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "session_id": id }))))
}

async fn terminate(State(host): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, HostError> {
    let phase = host.terminate(&id).await?;
    Ok(Json(json!({ "session_id": id, "phase": phase })))
}

async fn code(State(host): State<AppState>, Path((id, version)): Path<(String, String)>) -> Result<impl IntoResponse, HostError> {
    let handle = host.get(&id)?;
    let version = version.trim_start_matches('v').trim_end_matches(".py");
    let not_found = || HostError::NotFound(format!("session {id} has no code version {version}"));
    let n: u32 = version.parse().map_err(|_| not_found())?;
    let source = handle.with_state(|s| s.code_versions.iter().find(|c| c.version == n).map(|c| c.source.clone()));
    let source = source.ok_or_else(not_found)?;
    Ok(([(header::CONTENT_TYPE, "text/x-python; charset=utf-8")], source))
}

/// `view` is the 1-based view index or the image's file name.
async fn render_view(
    State(host): State<AppState>,
    Path((id, set, view)): Path<(String, String, String)>,
) -> Result<impl IntoResponse, HostError> {
    let handle = host.get(&id)?;
    let not_found = || HostError::NotFound(format!("session {id} has no view {view} in render set {set}"));
    let path = handle.with_state(|s| {
        let rs = s.render_sets.iter().find(|r| r.render_set_id == set)?;
        let v = match view.parse::<usize>() {
            Ok(k) if k >= 1 => rs.views.get(k - 1),
            _ => rs.views.iter().find(|v| v.image_path.file_name().is_some_and(|n| n.to_string_lossy() == view)),
        }?;
        Some(v.image_path.clone())
    });
    let path = handle.dir.join(path.ok_or_else(not_found)?);
    let bytes = tokio::fs::read(&path).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes))
}

/// Binds and serves until the process is stopped.
pub async fn serve(host: Arc<SessionHost>) -> anyhow::Result<()> {
    let bind = host.env.config.bind.clone();
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(host)).await?;
    Ok(())
}
