//! HTTP sessions over the engine.
//!
//! Each session owns a document, a revision counter, a bounded undo history
//! of networks and a compiled context cached per revision. Mutations take
//! the session lock, so they apply in arrival order; queries clone the
//! cached context and run without holding it. Response bodies use the same
//! canonical JSON as the CLI's `--format json`.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};
use uuid::Uuid;

use crate::error::Error;
use crate::fitting::{self, Assessment, FitConfig, FitResult, ScoringRule};
use crate::formats::{self, to_canonical_json, Document};
use crate::inference::{compile, InferenceContext};
use crate::model::{scale_to_unit, Network, ParamIndex};
use crate::montecarlo::{estimate_sensitivities, SamplerConfig};
use crate::sensitivity::{query_scenario, sensitivities_with, Scenario, SensitivitySummary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Undo points kept per session.
    pub history_cap: usize,
    /// Directory for on-demand snapshots; snapshots are refused when unset.
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            history_cap: 100,
            snapshot_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read `{}`: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
enum JobStatus {
    Running,
    Done { result: Box<FitResult>, revision: u64 },
    /// Finished after the session moved on; the fit was not applied.
    Stale { result: Box<FitResult> },
    Failed { reason: String, message: String },
}

struct Session {
    doc: Document,
    revision: u64,
    history: VecDeque<Network>,
    cache: Option<(u64, Arc<InferenceContext>)>,
    jobs: HashMap<Uuid, JobStatus>,
}

impl Session {
    fn context(&mut self) -> Arc<InferenceContext> {
        match &self.cache {
            Some((rev, ctx)) if *rev == self.revision => ctx.clone(),
            _ => {
                let ctx = Arc::new(compile(&self.doc.network));
                self.cache = Some((self.revision, ctx.clone()));
                ctx
            }
        }
    }

    /// Replaces the network, recording the old one as an undo point.
    fn commit(&mut self, next: Network, cap: usize) {
        let prev = std::mem::replace(&mut self.doc.network, next);
        self.history.push_back(prev);
        while self.history.len() > cap {
            self.history.pop_front();
        }
        self.revision += 1;
    }
}

struct AppState {
    config: ServiceConfig,
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<Session>>>>,
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    reason: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, reason: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            reason: reason.into(),
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed body", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.reason(), e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    reason: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = to_canonical_json(&ErrorBody {
            reason: &self.reason,
            message: &self.message,
        });
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_canonical_json(value),
    )
        .into_response()
}

fn ok<T: Serialize>(value: &T) -> ApiResult {
    Ok(json(StatusCode::OK, value))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

async fn session(state: &AppState, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
    let unknown = || ApiError::new(StatusCode::NOT_FOUND, "unknown session", format!("no session `{id}`"));
    let id = Uuid::parse_str(id).map_err(|_| unknown())?;
    state.sessions.read().await.get(&id).cloned().ok_or_else(unknown)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(config: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        config,
        sessions: RwLock::new(HashMap::new()),
    });
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/network", get(get_network))
        .route("/sessions/{id}/params", axum::routing::patch(patch_params))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/sensitivities", post(sens))
        .route("/sessions/{id}/mc-sensitivities", post(mc_sens))
        .route("/sessions/{id}/assessments", get(list_assessments).post(add_assessment))
        .route(
            "/sessions/{id}/assessments/{index}",
            axum::routing::put(replace_assessment).delete(remove_assessment),
        )
        .route("/sessions/{id}/fit", post(start_fit))
        .route("/sessions/{id}/fit/{job}", get(fit_status))
        .route("/sessions/{id}/gradient-step", post(gradient_step))
        .route("/sessions/{id}/snapshot", post(snapshot))
        .with_state(state)
}

pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port)).await?;
    axum::serve(listener, router(config)).await
}

pub fn serve_blocking(config: ServiceConfig) -> std::io::Result<()> {
    tokio::runtime::Runtime::new()?.block_on(serve(config))
}

#[derive(Serialize)]
struct Revision {
    revision: u64,
}

#[derive(Serialize)]
struct Created {
    id: String,
    revision: u64,
}

async fn create_session(State(state): State<Shared>, body: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut doc = formats::parse_document(text).map_err(|e| {
        let syntax = e.issues.iter().any(|i| i.line.is_some());
        let status = if syntax {
            StatusCode::BAD_REQUEST
        } else {
            StatusCode::UNPROCESSABLE_ENTITY
        };
        ApiError::new(status, if syntax { "malformed body" } else { "invalid document" }, e.to_string())
    })?;
    doc.network = scale_to_unit(&doc.network);
    let id = Uuid::new_v4();
    let session = Session {
        doc,
        revision: 0,
        history: VecDeque::new(),
        cache: None,
        jobs: HashMap::new(),
    };
    state.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
    Ok(json(
        StatusCode::CREATED,
        &Created {
            id: id.to_string(),
            revision: 0,
        },
    ))
}

async fn delete_session(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult {
    session(&state, &id).await?;
    let key = Uuid::parse_str(&id).expect("checked above");
    state.sessions.write().await.remove(&key);
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn get_network(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let s = session(&state, &id).await?;
    let s = s.lock().await;
    let mut resp = (
        [(header::CONTENT_TYPE, "application/json")],
        formats::serialize_document(&s.doc),
    )
        .into_response();
    resp.headers_mut()
        .insert("x-revision", s.revision.to_string().parse().expect("ascii"));
    Ok(resp)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEdit {
    param: ParamIndex,
    value: f64,
}

async fn patch_params(State(state): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult {
    let edits: Vec<ParamEdit> = parse_body(&body)?;
    let s = session(&state, &id).await?;
    let mut s = s.lock().await;
    let mut next = s.doc.network.clone();
    for e in &edits {
        let (i, k) = next.resolve(&e.param)?;
        if s.doc.network.is_frozen(i, k) {
            return Err(Error::FrozenParameter(e.param.to_string()).into());
        }
        next = next.with_param(i, k, e.value)?;
    }
    s.commit(next, state.config.history_cap);
    ok(&Revision { revision: s.revision })
}

async fn undo(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let s = session(&state, &id).await?;
    let mut s = s.lock().await;
    let prev = s
        .history
        .pop_back()
        .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "nothing to undo", "undo history is empty"))?;
    s.doc.network = prev;
    s.revision += 1;
    ok(&Revision { revision: s.revision })
}

async fn current_context(state: &AppState, id: &str) -> Result<Arc<InferenceContext>, ApiError> {
    let s = session(state, id).await?;
    let mut s = s.lock().await;
    Ok(s.context())
}

async fn query(State(state): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult {
    let sc: Scenario = parse_body(&body)?;
    let ctx = current_context(&state, &id).await?;
    let result = blocking(move || query_scenario(&ctx, &sc)).await?;
    ok(&result)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SensRequest {
    evidence: crate::inference::Evidence,
    target: String,
    #[serde(default)]
    nodes: Option<Vec<String>>,
    #[serde(default)]
    summary: bool,
}

async fn sens(State(state): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult {
    let req: SensRequest = parse_body(&body)?;
    let ctx = current_context(&state, &id).await?;
    let sc = Scenario::new(req.evidence, &req.target);
    let nodes = req.nodes;
    let report = blocking(move || sensitivities_with(&ctx, &sc, nodes.as_deref())).await?;
    if req.summary {
        ok(&SensitivitySummary::from(&report))
    } else {
        ok(&report)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McRequest {
    evidence: crate::inference::Evidence,
    target: String,
    method: crate::montecarlo::SamplingMethod,
    sample_count: u64,
    seed: u64,
}

async fn mc_sens(State(state): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult {
    let req: McRequest = parse_body(&body)?;
    let ctx = current_context(&state, &id).await?;
    let sc = Scenario::new(req.evidence, &req.target);
    let cfg = SamplerConfig {
        method: req.method,
        sample_count: req.sample_count,
        seed: req.seed,
    };
    let report = blocking(move || estimate_sensitivities(ctx.network(), &sc, &cfg)).await?;
    ok(&report)
}

async fn list_assessments(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let s = session(&state, &id).await?;
    let s = s.lock().await;
    ok(&s.doc.assessments)
}

#[derive(Serialize)]
struct AssessmentSlot {
    index: usize,
    revision: u64,
}

async fn add_assessment(State(state): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult {
    let a: Assessment = parse_body(&body)?;
    let s = session(&state, &id).await?;
    let mut s = s.lock().await;
    a.validate(&s.doc.network)?;
    s.doc.assessments.push(a);
    s.revision += 1;
    Ok(json(
        StatusCode::CREATED,
        &AssessmentSlot {
            index: s.doc.assessments.len() - 1,
            revision: s.revision,
        },
    ))
}

fn assessment_index(s: &Session, index: usize) -> Result<usize, ApiError> {
    if index < s.doc.assessments.len() {
        Ok(index)
    } else {
        Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown assessment",
            format!("no assessment {index}"),
        ))
    }
}

async fn replace_assessment(
    State(state): State<Shared>,
    UrlPath((id, index)): UrlPath<(String, usize)>,
    body: Bytes,
) -> ApiResult {
    let a: Assessment = parse_body(&body)?;
    let s = session(&state, &id).await?;
    let mut s = s.lock().await;
    let index = assessment_index(&s, index)?;
    a.validate(&s.doc.network)?;
    s.doc.assessments[index] = a;
    s.revision += 1;
    ok(&AssessmentSlot {
        index,
        revision: s.revision,
    })
}

async fn remove_assessment(State(state): State<Shared>, UrlPath((id, index)): UrlPath<(String, usize)>) -> ApiResult {
    let s = session(&state, &id).await?;
    let mut s = s.lock().await;
    let index = assessment_index(&s, index)?;
    s.doc.assessments.remove(index);
    s.revision += 1;
    ok(&AssessmentSlot {
        index,
        revision: s.revision,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitRequest {
    rule: ScoringRule,
    #[serde(default)]
    config: FitConfig,
    /// Block until the fit finishes instead of returning a job id.
    #[serde(default)]
    wait: bool,
}

#[derive(Serialize)]
struct JobRef {
    job: String,
    status_url: String,
}

async fn start_fit(State(state): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult {
    let req: FitRequest = parse_body(&body)?;
    let handle = session(&state, &id).await?;
    let (net, assessments, started_at) = {
        let s = handle.lock().await;
        (s.doc.network.clone(), s.doc.assessments.clone(), s.revision)
    };
    let job = Uuid::new_v4();
    handle.lock().await.jobs.insert(job, JobStatus::Running);

    let cap = state.config.history_cap;
    let task_handle = handle.clone();
    let task = tokio::spawn(async move {
        let result =
            tokio::task::spawn_blocking(move || fitting::fit(&net, &assessments, req.rule, &req.config)).await;
        let mut s = task_handle.lock().await;
        let status = match result {
            Ok(Ok(r)) if s.revision == started_at => {
                s.commit(r.network.clone(), cap);
                JobStatus::Done {
                    result: Box::new(r),
                    revision: s.revision,
                }
            }
            Ok(Ok(r)) => JobStatus::Stale { result: Box::new(r) },
            Ok(Err(e)) => JobStatus::Failed {
                reason: e.reason().into(),
                message: e.to_string(),
            },
            Err(e) => JobStatus::Failed {
                reason: "internal".into(),
                message: e.to_string(),
            },
        };
        s.jobs.insert(job, status.clone());
        status
    });

    if req.wait {
        let status = task
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        return match status {
            JobStatus::Failed { reason, message } => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &reason, message)),
            other => ok(&other),
        };
    }
    Ok(json(
        StatusCode::ACCEPTED,
        &JobRef {
            job: job.to_string(),
            status_url: format!("/sessions/{id}/fit/{job}"),
        },
    ))
}

async fn fit_status(State(state): State<Shared>, UrlPath((id, job)): UrlPath<(String, String)>) -> ApiResult {
    let s = session(&state, &id).await?;
    let s = s.lock().await;
    let unknown = || ApiError::new(StatusCode::NOT_FOUND, "unknown job", format!("no fit job `{job}`"));
    let key = Uuid::parse_str(&job).map_err(|_| unknown())?;
    ok(s.jobs.get(&key).ok_or_else(unknown)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRequest {
    assessment: AssessmentRef,
    step: f64,
    #[serde(default = "default_rule")]
    rule: ScoringRule,
    #[serde(default)]
    floor: Option<f64>,
}

fn default_rule() -> ScoringRule {
    ScoringRule::Logarithmic
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AssessmentRef {
    Index(usize),
    Inline(Box<Assessment>),
}

#[derive(Serialize)]
struct StepResponse {
    revision: u64,
    target_states: Vec<String>,
    distribution: Vec<f64>,
    distance: f64,
}

async fn gradient_step(State(state): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult {
    let req: StepRequest = parse_body(&body)?;
    if !(req.step > 0.0 && req.step.is_finite()) {
        return Err(Error::InvalidConfig("step must be positive".into()).into());
    }
    let handle = session(&state, &id).await?;
    let mut s = handle.lock().await;
    let a = match req.assessment {
        AssessmentRef::Index(i) => s.doc.assessments[assessment_index(&s, i)?].clone(),
        AssessmentRef::Inline(a) => *a,
    };
    let floor = req.floor.unwrap_or(FitConfig::default().parameter_floor);
    let net = s.doc.network.clone();
    let outcome = blocking(move || fitting::gradient_step(&net, &a, req.rule, req.step, floor)).await?;
    s.commit(outcome.network, state.config.history_cap);
    ok(&StepResponse {
        revision: s.revision,
        target_states: outcome.target_states,
        distribution: outcome.distribution,
        distance: outcome.distance,
    })
}

#[derive(Serialize)]
struct SnapshotRef {
    path: String,
    revision: u64,
}

async fn snapshot(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let Some(dir) = state.config.snapshot_dir.clone() else {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "snapshots disabled",
            "no snapshot_dir configured",
        ));
    };
    let s = session(&state, &id).await?;
    let s = s.lock().await;
    let path = dir.join(format!("{id}-r{}.json", s.revision));
    std::fs::write(&path, formats::serialize_document(&s.doc))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string()))?;
    ok(&SnapshotRef {
        path: path.display().to_string(),
        revision: s.revision,
    })
}
