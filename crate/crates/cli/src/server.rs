//! HTTP front end over [`AnalysisService`].

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use modallens::service::{render, AnalysisService, BrushQuery, ServiceError};
use serde::Serialize;

use crate::views::{respond, ViewRequest};

type Params = Query<BTreeMap<String, String>>;

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    completed: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    missing: Option<Vec<String>>,
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::NotReady { .. } => StatusCode::CONFLICT,
        ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
        ServiceError::Validation(_) => StatusCode::BAD_REQUEST,
        ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error_response(e: ServiceError) -> Response {
    let status = status_of(&e);
    let message = e.to_string();
    let body = match e {
        ServiceError::NotReady { completed, missing } => ErrorBody {
            error: "not_ready",
            message,
            completed: Some(completed),
            missing: Some(missing),
        },
        ServiceError::NotFound(_) => ErrorBody {
            error: "not_found",
            message,
            completed: None,
            missing: None,
        },
        ServiceError::Validation(_) => ErrorBody {
            error: "validation",
            message,
            completed: None,
            missing: None,
        },
        ServiceError::Internal(_) => ErrorBody {
            error: "internal",
            message,
            completed: None,
            missing: None,
        },
    };
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        render(&body),
    )
        .into_response()
}

async fn answer(
    service: Arc<AnalysisService>,
    build: impl FnOnce() -> Result<ViewRequest, ServiceError> + Send + 'static,
) -> Response {
    let work =
        tokio::task::spawn_blocking(move || build().and_then(|req| respond(&service, &req))).await;
    match work {
        Ok(Ok(body)) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Ok(Err(e)) => error_response(e),
        Err(e) => error_response(ServiceError::Internal(e.to_string())),
    }
}

async fn view(
    service: Arc<AnalysisService>,
    name: &'static str,
    params: BTreeMap<String, String>,
) -> Response {
    answer(service, move || ViewRequest::from_params(name, &params)).await
}

async fn summary(State(s): State<Arc<AnalysisService>>, Query(p): Params) -> Response {
    view(s, "summary", p).await
}

async fn templates(State(s): State<Arc<AnalysisService>>, Query(p): Params) -> Response {
    view(s, "templates", p).await
}

async fn projection(State(s): State<Arc<AnalysisService>>, Query(p): Params) -> Response {
    view(s, "projection", p).await
}

async fn metrics(State(s): State<Arc<AnalysisService>>, Query(p): Params) -> Response {
    view(s, "metrics", p).await
}

async fn meta(State(s): State<Arc<AnalysisService>>, Query(p): Params) -> Response {
    view(s, "meta", p).await
}

async fn instance(
    State(s): State<Arc<AnalysisService>>,
    Path(id): Path<String>,
    Query(mut p): Params,
) -> Response {
    p.insert("id".into(), id);
    view(s, "instance", p).await
}

async fn group_query(State(s): State<Arc<AnalysisService>>, body: Bytes) -> Response {
    answer(s, move || {
        serde_json::from_slice::<BrushQuery>(&body)
            .map(ViewRequest::Group)
            .map_err(|e| ServiceError::Validation(format!("brush query: {e}")))
    })
    .await
}

pub fn router(service: Arc<AnalysisService>) -> Router {
    Router::new()
        .route("/summary", get(summary))
        .route("/groups/query", post(group_query))
        .route("/templates", get(templates))
        .route("/projection", get(projection))
        .route("/instances/:id", get(instance))
        .route("/metrics", get(metrics))
        .route("/meta", get(meta))
        .with_state(service)
}

/// Serves until the process exits.
pub fn serve_blocking(service: Arc<AnalysisService>, addr: SocketAddr) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        println!("serving on http://{}", listener.local_addr()?);
        axum::serve(listener, router(service)).await
    })
}

/// A server on an ephemeral local port, running on its own thread.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn start(service: Arc<AnalysisService>) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                axum::serve(listener, router(service))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("server");
            })
        });
        Ok(BackgroundServer {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
