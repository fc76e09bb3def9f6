//! HTTP routes. Every body, in and out, is JSON; responses use sorted keys
//! so identical state always serializes to identical bytes.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rekodx_core::config::ConfigOverrides;
use rekodx_core::cycle::{Goal, Recommendation, Resolution, Session, SessionError, StepEvent, StepStatus};
use rekodx_core::evidence::{FindingState, Scalar};
use rekodx_core::guard::{check_differential, Severity, Verdict};
use rekodx_core::model::to_sorted_json;
use rekodx_core::reasoning::{explain, ExplanationEntry, ReasonError, RankedNode};
use serde::{Deserialize, Serialize};

use crate::registry::ModuleRegistry;
use crate::store::{SessionStore, StoreError};

#[derive(Debug, Clone)]
pub struct AppState {
    pub registry: Arc<ModuleRegistry>,
    pub store: Arc<SessionStore>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body<'a> {
            error: Inner<'a>,
        }
        #[derive(Serialize)]
        struct Inner<'a> {
            code: &'a str,
            message: &'a str,
        }
        let body = Body {
            error: Inner {
                code: self.code,
                message: &self.message,
            },
        };
        json_response(self.status, &body)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::UnknownSession(_) => Self::new(StatusCode::NOT_FOUND, "UNKNOWN_SESSION", message),
            StoreError::Session(s) => s.into(),
            StoreError::Journal(_) => {
                tracing::error!(%message, "journal write failed");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "JOURNAL_ERROR", message)
            }
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::AlreadyObserved(_) | SessionError::Terminated => StatusCode::CONFLICT,
            SessionError::Config(_) | SessionError::Reference(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(r.status(), "BAD_REQUEST", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", r.body_text())
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_sorted_json(body),
    )
        .into_response()
}

fn ok<T: Serialize>(body: &T) -> Response {
    json_response(StatusCode::OK, body)
}

/// Runs store work (which may fsync) off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string())))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/modules", get(list_modules))
        .route("/modules/{id}", get(get_module))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/findings", post(post_finding))
        .route("/sessions/{id}/differential", get(differential))
        .route("/sessions/{id}/recommendations", get(recommendations))
        .route("/sessions/{id}/explanations/{node_id}", get(explanation))
        .route("/sessions/{id}/transcript", get(transcript))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such route") })
        .with_state(state)
}

async fn list_modules(State(st): State<AppState>) -> Response {
    ok(&st.registry.summaries())
}

async fn get_module(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let kb = st
        .registry
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_MODULE", format!("unknown module {id:?}")))?;
    Ok(ok(&kb.module().normalized()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub module_id: String,
    #[serde(default)]
    pub config_overrides: ConfigOverrides,
    #[serde(default)]
    pub context: BTreeMap<String, Scalar>,
}

#[derive(Debug, Serialize)]
struct Created {
    session_id: String,
    module_id: String,
    module_version: String,
}

async fn create_session(
    State(st): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let kb = st
        .registry
        .get(&req.module_id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_MODULE", format!("unknown module {:?}", req.module_id)))?;
    let store = st.store.clone();
    let created = blocking(move || {
        let session_id = store.create(&kb, req.config_overrides, req.context)?;
        Ok(Created {
            session_id,
            module_id: kb.id().to_string(),
            module_version: kb.version().to_string(),
        })
    })
    .await?;
    Ok(json_response(StatusCode::CREATED, &created))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostFinding {
    pub finding_id: String,
    pub state: FindingState,
}

async fn post_finding(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<PostFinding>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let store = st.store.clone();
    let view = blocking(move || {
        let sid = id.clone();
        Ok(store.ingest(&id, &req.finding_id, req.state, |s| differential_view(&sid, s))?)
    })
    .await?;
    Ok(ok(&view))
}

#[derive(Debug, Serialize)]
pub struct NodeView {
    pub node_id: String,
    pub name: String,
    pub posterior: f64,
    /// `active`, `confirmed`, `rejected` or `inactive`.
    pub status: &'static str,
}

#[derive(Debug, Serialize)]
pub struct VetoedView {
    #[serde(flatten)]
    pub node: NodeView,
    pub constraint_ids: Vec<String>,
    pub messages: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct DifferentialView {
    pub session_id: String,
    pub module_id: String,
    pub module_version: String,
    pub step_count: u32,
    pub step_status: StepStatus,
    pub ranked: Vec<NodeView>,
    pub vetoed: Vec<VetoedView>,
    pub verdicts: Vec<Verdict>,
    pub goal: Option<Goal>,
}

fn node_view(s: &Session, r: &RankedNode) -> NodeView {
    let kb = s.knowledge_base();
    let name = kb
        .node_ix(&r.node_id)
        .map(|n| kb.node(n).name.clone())
        .unwrap_or_default();
    let status = match s.resolution(&r.node_id) {
        Some(Resolution::Confirmed) => "confirmed",
        Some(Resolution::Rejected) => "rejected",
        None if s.is_active(&r.node_id) => "active",
        None => "inactive",
    };
    NodeView {
        node_id: r.node_id.clone(),
        name,
        posterior: r.posterior,
        status,
    }
}

/// The guarded differential. Constraints run on every read, so the verdicts
/// always reflect the current evidence.
pub fn differential_view(session_id: &str, s: &Session) -> DifferentialView {
    let kb = s.knowledge_base();
    let ranking = s.ranking();
    let guarded = check_differential(kb, s.evidence(), &ranking);
    let kept: std::collections::BTreeSet<&str> = guarded.ranking.iter().map(|r| r.node_id.as_str()).collect();
    let vetoed = ranking
        .iter()
        .filter(|r| !kept.contains(r.node_id.as_str()))
        .map(|r| {
            let fired = guarded
                .verdicts
                .iter()
                .filter(|v| v.node_id == r.node_id && v.outcome == Severity::Veto);
            let (constraint_ids, messages) = fired.map(|v| (v.constraint_id.clone(), v.message.clone())).unzip();
            VetoedView {
                node: node_view(s, r),
                constraint_ids,
                messages,
            }
        })
        .collect();
    DifferentialView {
        session_id: session_id.to_string(),
        module_id: kb.id().to_string(),
        module_version: kb.version().to_string(),
        step_count: s.step_count(),
        step_status: s.step_status(),
        ranked: guarded.ranking.iter().map(|r| node_view(s, r)).collect(),
        vetoed,
        verdicts: guarded.verdicts,
        goal: s.goal().cloned(),
    }
}

async fn differential(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let view = st.store.read(&id, |s| differential_view(&id, s))?;
    Ok(ok(&view))
}

#[derive(Debug, Deserialize)]
pub struct RecQuery {
    pub k: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct RecommendationsView {
    pub session_id: String,
    pub k: usize,
    pub recommendations: Vec<Recommendation>,
    pub goal: Option<Goal>,
    pub step_status: StepStatus,
}

pub const DEFAULT_K: usize = 3;

async fn recommendations(
    State(st): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<RecQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query?;
    let k = q.k.unwrap_or(DEFAULT_K);
    let view = st.store.read(&id, |s| RecommendationsView {
        session_id: id.clone(),
        k,
        recommendations: s.rank_candidates(k),
        goal: s.goal().cloned(),
        step_status: s.step_status(),
    })?;
    Ok(ok(&view))
}

#[derive(Debug, Serialize)]
pub struct ExplanationView {
    pub session_id: String,
    pub node_id: String,
    pub prior: f64,
    pub posterior: f64,
    pub entries: Vec<ExplanationEntry>,
}

async fn explanation(
    State(st): State<AppState>,
    Path((id, node_id)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let view = st.store.read(&id, |s| -> Result<ExplanationView, ReasonError> {
        let kb = s.knowledge_base();
        let entries = explain(kb, &node_id, s.evidence())?;
        Ok(ExplanationView {
            session_id: id.clone(),
            node_id: node_id.clone(),
            prior: rekodx_core::reasoning::prior(kb, &node_id)?,
            posterior: s.posterior(&node_id).expect("node has a prior"),
            entries,
        })
    })?;
    match view {
        Ok(v) => Ok(ok(&v)),
        Err(e @ ReasonError::UnknownNode(_)) => Err(ApiError::new(StatusCode::NOT_FOUND, e.code(), e.to_string())),
        Err(e) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())),
    }
}

#[derive(Debug, Serialize)]
pub struct TranscriptView<'a> {
    pub session_id: &'a str,
    pub module_id: &'a str,
    pub module_version: &'a str,
    pub step_log: &'a [StepEvent],
}

/// The full step log as served by the transcript endpoint.
pub fn transcript_json(session_id: &str, s: &Session) -> String {
    let kb = s.knowledge_base();
    to_sorted_json(&TranscriptView {
        session_id,
        module_id: kb.id(),
        module_version: kb.version(),
        step_log: s.step_log(),
    })
}

async fn transcript(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = st.store.read(&id, |s| transcript_json(&id, s))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

#[derive(Debug, Serialize)]
struct Closed<'a> {
    session_id: &'a str,
    closed: bool,
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let store = st.store.clone();
    let sid = id.clone();
    blocking(move || Ok(store.delete(&sid)?)).await?;
    Ok(ok(&Closed {
        session_id: &id,
        closed: true,
    }))
}
