//! JSON API for the review UI.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/runs` | all runs, oldest week first |
//! | GET | `/runs/{id}/predictions?label=&page=&per_page=` | review queue |
//! | POST | `/predictions/{id}/feedback` | `{label, annotator}` |
//! | GET | `/predictions/{id}/feedback` | label history |
//! | POST | `/pool/promote` | `{article_ref, explanation}` |
//! | GET | `/pool/{language}` | pool versions |
//! | GET | `/reports/deployment?language=` | weekly metrics over labeled items |
//!
//! Errors are `{code, message, details}`. When a token is configured every
//! request needs `Authorization: Bearer <token>`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use serow_core::evaluation::DeploymentReport;
use serow_core::ingestion::ArticleId;
use serow_core::pipeline::Label;

use crate::{LabelFilter, Store, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ApiErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ApiErrorBody { code: code.into(), message: message.into(), details: Value::Null } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_argument", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, code) = match &e {
            StoreError::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "invalid_argument"),
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            StoreError::Precondition(_) => (StatusCode::CONFLICT, "precondition_failed"),
            StoreError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("api: {e}");
        }
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        let mut err = ApiError::bad_request(e.body_text());
        err.status = e.status();
        err
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
struct AppState {
    store: Arc<Store>,
    token: Option<Arc<str>>,
}

async fn blocking<T, F>(store: &Arc<Store>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> crate::Result<T> + Send + 'static,
{
    let store = store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(store: Arc<Store>, token: Option<String>) -> Router {
    let state = AppState { store, token: token.filter(|t| !t.is_empty()).map(Arc::from) };
    Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{id}/predictions", get(list_predictions))
        .route("/predictions/{id}/feedback", post(post_feedback).get(feedback_history))
        .route("/pool/promote", post(promote))
        .route("/pool/{language}", get(pool_versions))
        .route("/reports/deployment", get(deployment))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

/// Binds and serves until the process is stopped.
pub async fn serve(store: Arc<Store>, addr: SocketAddr, token: Option<String>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store, token)).await
}

#[derive(Serialize)]
struct RunsBody {
    runs: Vec<crate::RunRecord>,
}

async fn list_runs(State(s): State<AppState>) -> ApiResult<RunsBody> {
    Ok(Json(RunsBody { runs: blocking(&s.store, |st| st.runs()).await? }))
}

#[derive(Deserialize)]
struct PageQuery {
    #[serde(default)]
    label: LabelFilter,
    #[serde(default = "one")]
    page: usize,
    #[serde(default = "fifty")]
    per_page: usize,
}

fn one() -> usize {
    1
}

fn fifty() -> usize {
    50
}

async fn list_predictions(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<PageQuery>, QueryRejection>,
) -> ApiResult<crate::Page<crate::ReviewItem>> {
    let Query(q) = q?;
    Ok(Json(blocking(&s.store, move |st| st.review_items(&id, q.label, q.page, q.per_page)).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackBody {
    label: Label,
    annotator: String,
}

fn prediction_id(raw: &str) -> Result<i64, ApiError> {
    raw.parse().map_err(|_| ApiError::bad_request(format!("prediction id `{raw}` is not an integer")))
}

async fn post_feedback(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<FeedbackBody>, JsonRejection>,
) -> Result<(StatusCode, Json<crate::FeedbackRecord>), ApiError> {
    let id = prediction_id(&id)?;
    let Json(body) = body?;
    let record = blocking(&s.store, move |st| st.record_feedback_for(id, body.label, &body.annotator)).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

#[derive(Serialize)]
struct HistoryBody {
    history: Vec<crate::FeedbackRecord>,
}

async fn feedback_history(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<HistoryBody> {
    let id = prediction_id(&id)?;
    Ok(Json(HistoryBody { history: blocking(&s.store, move |st| st.feedback_history(id)).await? }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromoteBody {
    article_ref: ArticleId,
    explanation: String,
}

async fn promote(
    State(s): State<AppState>,
    body: Result<Json<PromoteBody>, JsonRejection>,
) -> Result<(StatusCode, Json<crate::PoolVersionInfo>), ApiError> {
    let Json(body) = body?;
    let info = blocking(&s.store, move |st| st.promote_demonstration(&body.article_ref, &body.explanation)).await?;
    Ok((StatusCode::CREATED, Json(info)))
}

#[derive(Serialize)]
struct PoolBody {
    language: String,
    versions: Vec<crate::PoolVersionInfo>,
}

async fn pool_versions(State(s): State<AppState>, Path(language): Path<String>) -> ApiResult<PoolBody> {
    let lang = language.clone();
    let versions = blocking(&s.store, move |st| st.pool_versions(&lang)).await?;
    Ok(Json(PoolBody { language, versions }))
}

#[derive(Deserialize)]
struct ReportQuery {
    language: Option<String>,
}

#[derive(Serialize)]
struct ReportBody {
    language: Option<String>,
    report: Option<DeploymentReport>,
    table: Option<String>,
}

async fn deployment(State(s): State<AppState>, q: Result<Query<ReportQuery>, QueryRejection>) -> ApiResult<ReportBody> {
    let Query(q) = q?;
    let lang = q.language.clone();
    let report = blocking(&s.store, move |st| st.deployment_report(lang.as_deref())).await?;
    let table = report.as_ref().map(|r| r.render_table());
    Ok(Json(ReportBody { language: q.language, report, table }))
}
