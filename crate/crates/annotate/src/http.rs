//! JSON API over a [`Store`].
//!
//! | method | path                   |                                        |
//! |--------|------------------------|----------------------------------------|
//! | GET    | `/tasks/next`          | `?annotator=<id>[&kind=<kind>]`        |
//! | POST   | `/tasks/{id}/response` | [`Submission`] body                    |
//! | GET    | `/meme/{id}/image`     | stored image bytes                     |
//! | GET    | `/images/{name}`       | image by content address               |
//! | GET    | `/stats`               | [`Stats`](crate::Stats)                |

use std::net::SocketAddr;
use std::path::Path as FsPath;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::{Submission, Task, TaskKind, TaskSpec};
use crate::store::{Store, SubmitError, SubmitOutcome};

/// Task payload as shown to annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub kind: TaskKind,
    pub meme_ids: Vec<String>,
    /// Image URLs, original first for pair tasks.
    pub media: Vec<String>,
    pub captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_shown: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextTaskView {
    pub task: Option<TaskView>,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitReply {
    pub task_id: String,
    pub status: SubmitOutcome,
}

pub fn task_view(store: &Store, task: &Task) -> TaskView {
    let meme_ids: Vec<String> = task.meme_ids().into_iter().map(str::to_string).collect();
    TaskView {
        task_id: task.task_id.clone(),
        kind: task.kind(),
        media: meme_ids.iter().map(|id| format!("/meme/{id}/image")).collect(),
        captions: meme_ids
            .iter()
            .map(|id| store.meme(id).map(|m| m.caption.clone()).unwrap_or_default())
            .collect(),
        score_shown: match task.spec {
            TaskSpec::Agreement { score_shown, .. } => Some(score_shown),
            TaskSpec::PairQuality { .. } => None,
        },
        meme_ids,
    }
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}/response", post(submit))
        .route("/meme/{id}/image", get(meme_image))
        .route("/images/{name}", get(image_by_name))
        .route("/stats", get(stats))
        .with_state(store)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(store: Arc<Store>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(store)).await
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
    kind: Option<TaskKind>,
}

async fn next_task(State(store): State<Arc<Store>>, Query(q): Query<NextQuery>) -> Response {
    if q.annotator.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "annotator must not be empty");
    }
    let s = store.clone();
    let result = tokio::task::spawn_blocking(move || s.next_task(&q.annotator, q.kind)).await;
    match result {
        Ok(Ok(next)) => Json(NextTaskView {
            task: next.task.as_ref().map(|t| task_view(&store, t)),
            remaining: next.remaining,
        })
        .into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn submit(
    State(store): State<Arc<Store>>,
    Path(task_id): Path<String>,
    body: Result<Json<Submission>, JsonRejection>,
) -> Response {
    if store.task(&task_id).is_none() {
        return error(StatusCode::NOT_FOUND, format!("unknown task {task_id:?}"));
    }
    let submission = match body {
        Ok(Json(s)) => s,
        Err(JsonRejection::JsonDataError(e)) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
        Err(e) => return error(e.status(), e.body_text()),
    };
    let id = task_id.clone();
    let result = tokio::task::spawn_blocking(move || store.submit(&id, submission)).await;
    match result {
        Ok(Ok(status)) => Json(SubmitReply { task_id, status }).into_response(),
        Ok(Err(e @ SubmitError::UnknownTask(_))) => error(StatusCode::NOT_FOUND, e),
        Ok(Err(e @ SubmitError::Invalid(_))) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
        Ok(Err(e @ SubmitError::Conflict(_))) => error(StatusCode::CONFLICT, e),
        Ok(Err(e @ SubmitError::Store(_))) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn meme_image(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Response {
    match store.meme_image(&id) {
        Some((path, bytes)) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no image for meme {id:?}")),
    }
}

async fn image_by_name(State(store): State<Arc<Store>>, Path(name): Path<String>) -> Response {
    match store.image_by_name(&name) {
        Some(bytes) => ([(header::CONTENT_TYPE, content_type(FsPath::new(&name)))], bytes).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no image {name:?}")),
    }
}

async fn stats(State(store): State<Arc<Store>>) -> Response {
    Json(store.stats()).into_response()
}
