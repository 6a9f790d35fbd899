//! JSON HTTP API for annotation sessions, agreement and classification.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use newsframe_core::annotate::{
    aligned_main_frames, cohen_kappa, contingency, kappa_confidence_interval, AgreementError,
    AgreementReport, AnnotateError, AnnotationRecord, AnnotationSession, Annotator, NextItem,
};
use newsframe_core::codebook::{codebook_text, FrameCode, FrameDefinition, LabelSet};
use newsframe_core::corpus::Paragraph;
use newsframe_core::{FramePredictor, Prediction};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Confidence level of the interval reported by `/api/agreement`.
pub const CI_LEVEL: f64 = 0.95;

pub struct AppState {
    annotator: Mutex<Annotator>,
    model: Option<Arc<dyn FramePredictor>>,
}

impl AppState {
    pub fn new(annotator: Annotator, model: Option<Arc<dyn FramePredictor>>) -> Arc<Self> {
        Arc::new(AppState {
            annotator: Mutex::new(annotator),
            model,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/codebook", get(codebook))
        .route("/api/session", post(open_session))
        .route("/api/session/{id}/next", get(next))
        .route("/api/session/{id}/annotations", post(annotate))
        .route("/api/agreement", get(agreement))
        .route("/api/progress", get(progress))
        .route("/api/classify", post(classify))
        .with_state(state)
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl ToString) -> Self {
        ApiError {
            status,
            body: json!({"error": error, "message": message.to_string()}),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        match &e {
            AnnotateError::UnknownSession(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_session", e),
            AnnotateError::Validation(v) => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({
                    "error": "invalid_label_set",
                    "message": e.to_string(),
                    "rules": v.messages(),
                }),
            },
            AnnotateError::Conflict { .. } => ApiError::new(StatusCode::CONFLICT, "duplicate_annotation", e),
            AnnotateError::Sequencing { .. } => ApiError::new(StatusCode::CONFLICT, "out_of_sequence", e),
            AnnotateError::UnknownParagraph(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_paragraph", e),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store", e),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), "bad_request_body", e.body_text())
    }
}

fn lock(state: &AppState) -> std::sync::MutexGuard<'_, Annotator> {
    // A panic mid-request cannot leave the annotator half-written: appends go
    // to the file before in-memory state changes.
    state.annotator.lock().unwrap_or_else(|p| p.into_inner())
}

async fn codebook() -> Json<Vec<FrameDefinition>> {
    Json(codebook_text())
}

#[derive(Debug, Deserialize)]
pub struct SessionRequest {
    pub coder_id: String,
}

#[derive(Debug, Serialize)]
pub struct SessionResponse {
    pub session_id: String,
    pub coder_id: String,
    pub queued: usize,
}

impl From<AnnotationSession> for SessionResponse {
    fn from(s: AnnotationSession) -> Self {
        SessionResponse {
            queued: s.queue.len(),
            session_id: s.session_id,
            coder_id: s.coder_id,
        }
    }
}

async fn open_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionResponse>), ApiError> {
    let Json(req) = body?;
    let coder = req.coder_id.trim();
    if coder.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_coder_id", "coder_id must be non-empty"));
    }
    let session = lock(&state).open_session(coder);
    Ok((StatusCode::CREATED, Json(session.into())))
}

#[derive(Debug, Serialize)]
pub struct NextResponse {
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paragraph: Option<Paragraph>,
    /// Items labelled so far in this session.
    pub position: usize,
    pub total: usize,
}

async fn next(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<NextResponse>, ApiError> {
    let annotator = lock(&state);
    let item = annotator.next_paragraph(&id)?;
    let session = annotator.session(&id)?;
    Ok(Json(NextResponse {
        done: item == NextItem::Done,
        paragraph: match item {
            NextItem::Paragraph(p) => Some(p),
            NextItem::Done => None,
        },
        position: session.cursor,
        total: session.queue.len(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct AnnotationRequest {
    pub para_id: String,
    pub frames: Vec<FrameCode>,
    pub main: FrameCode,
}

async fn annotate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<AnnotationRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<AnnotationRecord>), ApiError> {
    let mut annotator = lock(&state);
    // Session existence is checked before the body so a bad id is a 404
    // whatever was posted.
    annotator.session(&id)?;
    let Json(req) = body?;
    let labels = LabelSet {
        frames: req.frames.into_iter().collect(),
        main: req.main,
    };
    let record = annotator.submit_annotation(&id, &req.para_id, labels)?;
    Ok((StatusCode::CREATED, Json(record)))
}

#[derive(Debug, Deserialize)]
pub struct AgreementQuery {
    pub coders: String,
}

#[derive(Debug, Serialize)]
pub struct Interval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Serialize)]
pub struct AgreementResponse {
    #[serde(flatten)]
    pub report: AgreementReport,
    pub coders: [String; 2],
    /// Absent when fewer than two items are shared.
    pub ci: Option<Interval>,
    /// Row and column order of `matrix`.
    pub codes: [FrameCode; 6],
    /// `matrix[i][j]`: items the first coder put in `codes[i]` and the
    /// second in `codes[j]`.
    pub matrix: [[u64; 6]; 6],
}

async fn agreement(
    State(state): State<Arc<AppState>>,
    query: Result<Query<AgreementQuery>, QueryRejection>,
) -> Result<Json<AgreementResponse>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_query", e.body_text()))?;
    let coders: Vec<&str> = q.coders.split(',').map(str::trim).collect();
    let [a, b] = coders[..] else {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_query", "coders must name exactly two coders: a,b"));
    };
    let annotator = lock(&state);
    let shared = aligned_main_frames(annotator.store(), a, b);
    drop(annotator);
    let la: Vec<FrameCode> = shared.iter().map(|s| s.1).collect();
    let lb: Vec<FrameCode> = shared.iter().map(|s| s.2).collect();
    let unprocessable = |e: AgreementError| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "agreement_undefined", e);
    let report = cohen_kappa(&la, &lb).map_err(unprocessable)?;
    let ci = match kappa_confidence_interval(&report, &la, &lb, CI_LEVEL) {
        Ok((lower, upper)) => Some(Interval { level: CI_LEVEL, lower, upper }),
        Err(AgreementError::TooFew { .. }) => None,
        Err(e) => return Err(unprocessable(e)),
    };
    Ok(Json(AgreementResponse {
        report,
        coders: [a.to_string(), b.to_string()],
        ci,
        codes: FrameCode::ALL,
        matrix: contingency(&la, &lb),
    }))
}

#[derive(Debug, Serialize)]
pub struct ProgressResponse {
    pub paragraphs: usize,
    pub coders: BTreeMap<String, usize>,
}

async fn progress(State(state): State<Arc<AppState>>) -> Json<ProgressResponse> {
    let annotator = lock(&state);
    Json(ProgressResponse {
        paragraphs: annotator.paragraph_count(),
        coders: annotator.store().progress(),
    })
}

#[derive(Debug, Deserialize)]
pub struct ClassifyRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ClassifyResponse {
    pub results: Vec<Prediction>,
}

async fn classify(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ClassifyRequest>, JsonRejection>,
) -> Result<Json<ClassifyResponse>, ApiError> {
    let Some(model) = state.model.clone() else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model_unavailable", "no model is loaded"));
    };
    let Json(req) = body?;
    let results = tokio::task::spawn_blocking(move || {
        let texts: Vec<&str> = req.texts.iter().map(String::as_str).collect();
        model.predict_batch(&texts)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))?
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "prediction_failed", e))?;
    Ok(Json(ClassifyResponse { results }))
}
