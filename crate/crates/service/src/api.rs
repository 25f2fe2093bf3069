use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::info;
use toxi_core::{FourWayDecision, Label};

use crate::store::{AnnotationStore, DecisionRecord, QueueItem, ServiceError};

pub type SharedStore = Arc<Mutex<AnnotationStore>>;

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::UnknownAnnotator(_) => (StatusCode::UNAUTHORIZED, "unknown_annotator"),
            ServiceError::InvalidAnnotator(_) => (StatusCode::BAD_REQUEST, "invalid_annotator"),
            ServiceError::LeaseConflict { .. } => (StatusCode::CONFLICT, "lease_conflict"),
            ServiceError::NotQueued(_) => (StatusCode::CONFLICT, "not_queued"),
            ServiceError::Unresolved(_) => (StatusCode::CONFLICT, "unresolved"),
            ServiceError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        (status, Json(json!({ "error": self.0.to_string(), "kind": kind }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextResponse {
    pub item: Option<QueueItem>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRequest {
    pub item_id: String,
    pub annotator_id: String,
    pub decision: FourWayDecision,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelResponse {
    pub item_id: String,
    pub decision: DecisionRecord,
    pub final_label: Option<Label>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemResponse {
    pub item: QueueItem,
    pub final_label: Option<Label>,
}

#[derive(Debug, Deserialize)]
struct AgreementQuery {
    a: String,
    b: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotatorRequest {
    pub id: String,
}

async fn next_item(State(store): State<SharedStore>, Query(q): Query<NextQuery>) -> ApiResult<NextResponse> {
    let item = store.lock().unwrap().next_item(&q.annotator)?;
    Ok(Json(NextResponse { item }))
}

async fn submit_label(State(store): State<SharedStore>, Json(req): Json<LabelRequest>) -> ApiResult<LabelResponse> {
    let mut store = store.lock().unwrap();
    let decision = store.submit_label(&req.item_id, &req.annotator_id, req.decision)?;
    let final_label = store.resolve_final_label(&req.item_id).ok();
    Ok(Json(LabelResponse { item_id: req.item_id, decision, final_label }))
}

async fn get_item(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult<ItemResponse> {
    let store = store.lock().unwrap();
    let item = store.item(&id).cloned().ok_or_else(|| ServiceError::NotFound(id.clone()))?;
    let policy = store.config().policy;
    let final_label = if item.is_resolved(&policy) { store.resolve_final_label(&id).ok() } else { None };
    Ok(Json(ItemResponse { item, final_label }))
}

async fn agreement(
    State(store): State<SharedStore>,
    Query(q): Query<AgreementQuery>,
) -> ApiResult<crate::store::AgreementReport> {
    Ok(Json(store.lock().unwrap().agreement(&q.a, &q.b)?))
}

async fn progress(State(store): State<SharedStore>) -> Json<crate::store::Progress> {
    Json(store.lock().unwrap().progress())
}

async fn register(
    State(store): State<SharedStore>,
    Json(req): Json<AnnotatorRequest>,
) -> Result<(StatusCode, Json<AnnotatorRequest>), ApiError> {
    store.lock().unwrap().register_annotator(&req.id)?;
    Ok((StatusCode::CREATED, Json(req)))
}

async fn annotators(State(store): State<SharedStore>) -> Json<Vec<String>> {
    Json(store.lock().unwrap().annotators().map(str::to_string).collect())
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/queue/next", get(next_item))
        .route("/api/labels", post(submit_label))
        .route("/api/items/:id", get(get_item))
        .route("/api/stats/agreement", get(agreement))
        .route("/api/stats/progress", get(progress))
        .route("/api/annotators", get(annotators).post(register))
        .with_state(store)
}

/// Serves the API until the process is stopped.
pub async fn serve(store: SharedStore, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(store)).await
}
