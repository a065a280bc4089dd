//! HTTP API v1.
//!
//! | method | path                              | |
//! |--------|-----------------------------------|-|
//! | POST   | `/api/v1/reports`                 | ingest an envelope, returns an ack |
//! | GET    | `/api/v1/alerts`                  | `device`, `disposition`, `review`, `since`, `until`, `page`, `per_page` |
//! | GET    | `/api/v1/alerts/{id}`             | |
//! | POST   | `/api/v1/alerts/{id}/review`      | body `{"verdict": "...", "reviewer": "..."}` |
//! | GET    | `/api/v1/alerts/{id}/snapshot`    | JPEG |
//! | GET    | `/api/v1/alerts/{id}/chip`        | JPEG |
//! | GET    | `/api/v1/devices`                 | |
//! | POST   | `/api/v1/devices/{id}/heartbeat`  | optional body `{"display_name": "..."}` |
//! | GET    | `/api/v1/stats`                   | alert counters |
//!
//! With a token configured every `/api` route needs `Authorization: Bearer <token>`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use super::{AlertFilter, Review, Service, ServiceError};
use crate::proto::AckDisposition;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

fn error_body(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let msg = self.0.to_string();
        match self.0 {
            ServiceError::Validation(_) => error_body(StatusCode::BAD_REQUEST, msg),
            ServiceError::NotFound(_) => error_body(StatusCode::NOT_FOUND, msg),
            ServiceError::Conflict { current, reviewer, .. } => (
                StatusCode::CONFLICT,
                Json(json!({ "error": msg, "review": current, "reviewer": reviewer })),
            )
                .into_response(),
            ServiceError::Store(_) | ServiceError::Classifier(_) | ServiceError::Export { .. } => {
                tracing::error!(error = %msg, "request failed");
                error_body(StatusCode::INTERNAL_SERVER_ERROR, msg)
            }
        }
    }
}

type AppState = Arc<Service>;

/// Runs blocking service code off the async workers.
async fn blocking<T, F>(svc: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ServiceError> + Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .unwrap_or_else(|e| Err(ServiceError::Classifier(format!("worker panicked: {e}"))))
        .map_err(ApiError)
}

async fn post_report(State(svc): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let ack = blocking(&svc, move |s| s.ingest_bytes(&body)).await?;
    let status = match ack.disposition {
        AckDisposition::Rejected { .. } => StatusCode::BAD_REQUEST,
        _ => StatusCode::OK,
    };
    Ok((status, Json(ack)).into_response())
}

fn parse_filter(q: &HashMap<String, String>) -> Result<(AlertFilter, usize, usize), ServiceError> {
    let bad = |k: &str, v: &str| ServiceError::Validation(format!("bad value {v:?} for {k}"));
    let mut f = AlertFilter::default();
    let (mut page, mut per_page) = (1usize, 50usize);
    for (k, v) in q {
        match k.as_str() {
            "device" => f.device_id = Some(v.clone()),
            "disposition" => f.disposition = Some(v.parse().map_err(ServiceError::Validation)?),
            "review" => f.review = Some(v.parse().map_err(ServiceError::Validation)?),
            "since" => f.since_ms = Some(v.parse().map_err(|_| bad(k, v))?),
            "until" => f.until_ms = Some(v.parse().map_err(|_| bad(k, v))?),
            "page" => page = v.parse().map_err(|_| bad(k, v))?,
            "per_page" => per_page = v.parse().map_err(|_| bad(k, v))?,
            _ => return Err(ServiceError::Validation(format!("unknown filter {k:?}"))),
        }
    }
    Ok((f, page, per_page))
}

async fn list_alerts(State(svc): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let (filter, page, per_page) = parse_filter(&q)?;
    let page = blocking(&svc, move |s| s.list_alerts(&filter, page, per_page)).await?;
    Ok(Json(page).into_response())
}

async fn get_alert(State(svc): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(svc.get_alert(&id)?).into_response())
}

#[derive(Deserialize)]
struct ReviewBody {
    verdict: Review,
    reviewer: String,
}

async fn review_alert(State(svc): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b: ReviewBody =
        serde_json::from_slice(&body).map_err(|e| ServiceError::Validation(format!("review body: {e}")))?;
    let alert = blocking(&svc, move |s| s.review_alert(&id, b.verdict, &b.reviewer)).await?;
    Ok(Json(alert).into_response())
}

async fn list_devices(State(svc): State<AppState>) -> Response {
    Json(json!({ "devices": svc.list_devices() })).into_response()
}

#[derive(Deserialize, Default)]
struct HeartbeatBody {
    display_name: Option<String>,
}

async fn heartbeat(State(svc): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b: HeartbeatBody = if body.is_empty() {
        HeartbeatBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::Validation(format!("heartbeat body: {e}")))?
    };
    let status = blocking(&svc, move |s| s.heartbeat(&id, b.display_name.as_deref())).await?;
    Ok(Json(status).into_response())
}

fn jpeg(bytes: Option<Vec<u8>>, id: &str) -> Result<Response, ApiError> {
    let bytes = bytes.ok_or_else(|| ServiceError::NotFound(id.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/jpeg")], bytes).into_response())
}

async fn snapshot(State(svc): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    jpeg(svc.store().snapshot(&id).map_err(ServiceError::from)?, &id)
}

async fn chip(State(svc): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    jpeg(svc.store().chip(&id).map_err(ServiceError::from)?, &id)
}

async fn stats(State(svc): State<AppState>) -> Response {
    Json(svc.stats()).into_response()
}

async fn require_token(State(token): State<Arc<String>>, headers: HeaderMap, req: Request, next: Next) -> Response {
    let ok = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == token.as_str());
    if ok {
        next.run(req).await
    } else {
        error_body(StatusCode::UNAUTHORIZED, "missing or wrong bearer token")
    }
}

pub fn router(svc: Arc<Service>, token: Option<String>, console_dir: Option<PathBuf>) -> Router {
    let mut api = Router::new()
        .route("/api/v1/reports", post(post_report))
        .route("/api/v1/alerts", get(list_alerts))
        .route("/api/v1/alerts/{id}", get(get_alert))
        .route("/api/v1/alerts/{id}/review", post(review_alert))
        .route("/api/v1/alerts/{id}/snapshot", get(snapshot))
        .route("/api/v1/alerts/{id}/chip", get(chip))
        .route("/api/v1/devices", get(list_devices))
        .route("/api/v1/devices/{id}/heartbeat", post(heartbeat))
        .route("/api/v1/stats", get(stats))
        .with_state(svc);
    if let Some(t) = token.filter(|t| !t.is_empty()) {
        api = api.layer(middleware::from_fn_with_state(Arc::new(t), require_token));
    }
    match console_dir {
        Some(dir) => api.nest_service("/console", ServeDir::new(dir)),
        None => api,
    }
}

/// A server on its own runtime thread; stops when dropped.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl RunningServer {
    pub fn start(app: Router, listen: &str) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(listen)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::Builder::new().name("http".into()).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        })?;
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server exits on its own (it only does so on error).
    pub fn wait(mut self) -> std::io::Result<()> {
        let t = self.thread.take().expect("server thread");
        match t.join() {
            Ok(r) => r,
            Err(_) => Err(std::io::Error::other("server thread panicked")),
        }
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take().map(|t| t.join()) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(std::io::Error::other("server thread panicked")),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}
