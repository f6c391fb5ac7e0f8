//! Read-only HTTP API over a loaded bundle. The annotations file is the only
//! thing it writes.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use actnet::pipeline::{AnalysisBundle, Annotation, BundleError, NetworkKind};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::Mutex;

pub const DEFAULT_TWEETS_K: usize = 5;

struct AppState {
    bundle: AnalysisBundle,
    annotations: Mutex<()>,
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, message: message.into() }
    }
}

impl From<BundleError> for ApiError {
    fn from(e: BundleError) -> Self {
        let status = match e {
            BundleError::UnknownIssue(_) | BundleError::UnknownKind(_) | BundleError::UnknownEdge(_) => {
                StatusCode::NOT_FOUND
            }
            BundleError::BadAnnotation(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn to_json<T: serde::Serialize>(value: &T) -> Json<Value> {
    Json(serde_json::to_value(value).expect("response serializes"))
}

pub fn router(bundle: AnalysisBundle) -> Router {
    let state = Arc::new(AppState { bundle, annotations: Mutex::new(()) });
    Router::new()
        .route("/api/issues", get(issues))
        .route("/api/networks/{issue}/{kind}", get(network))
        .route("/api/edges/{edge_id}/tweets", get(edge_tweets))
        .route("/api/actants/{label}/cross-issue", get(cross_issue))
        .route("/api/annotations", get(list_annotations).post(add_annotation))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

/// Binds `addr`. A port already in use is reported as an error here rather
/// than at serve time.
pub async fn bind(addr: &str) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

pub async fn serve(bundle: AnalysisBundle, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(bundle)).await
}

pub fn local_url(addr: SocketAddr) -> String {
    format!("http://{addr}")
}

async fn issues(State(st): State<Shared>) -> ApiResult {
    Ok(to_json(&st.bundle.issues))
}

fn parse_param<T: std::str::FromStr>(q: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError> {
    match q.get(name) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("query parameter {name}={raw:?} is invalid"))),
    }
}

async fn network(
    State(st): State<Shared>,
    Path((issue, kind)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let kind: NetworkKind = kind.parse()?;
    let doc = st.bundle.document(&issue, kind)?;
    match parse_param::<f64>(&q, "min_weight")? {
        None => Ok(to_json(doc)),
        Some(w) if w >= 0.0 => Ok(to_json(&doc.filtered(w))),
        Some(w) => Err(ApiError::bad_request(format!("min_weight must be non-negative, got {w}"))),
    }
}

async fn edge_tweets(
    State(st): State<Shared>,
    Path(edge_id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let k = parse_param::<usize>(&q, "k")?.unwrap_or(DEFAULT_TWEETS_K);
    if k == 0 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    let tweets = st.bundle.edge_tweets(&edge_id, k)?;
    Ok(to_json(&tweets))
}

async fn cross_issue(State(st): State<Shared>, Path(label): Path<String>) -> ApiResult {
    let camps = st.bundle.cross_issue_for(&label);
    if camps.is_empty() {
        return Err(ApiError::not_found(format!(
            "actant {label:?} does not recur in {} or more issues",
            st.bundle.cross_issue.min_issues
        )));
    }
    Ok(Json(json!({ "actant": label, "min_issues": st.bundle.cross_issue.min_issues, "camps": camps })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAnnotation {
    edge_id: String,
    note: String,
    #[serde(default)]
    author: String,
}

async fn add_annotation(State(st): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req: NewAnnotation =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid annotation body: {e}")))?;
    let annotation =
        Annotation { edge_id: req.edge_id, note: req.note, author: req.author, created_at: Some(chrono::Utc::now()) };
    let _guard = st.annotations.lock().await;
    st.bundle.append_annotation(&annotation)?;
    Ok((StatusCode::CREATED, to_json(&annotation)))
}

async fn list_annotations(State(st): State<Shared>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let edge_id = q.get("edge_id").map(String::as_str);
    if let Some(id) = edge_id {
        st.bundle.edge(id)?;
    }
    let _guard = st.annotations.lock().await;
    Ok(to_json(&st.bundle.annotations(edge_id)?))
}
