//! Local HTTP API over one project directory: ontology, annotation tasks,
//! agreement, the adjudication queue, predictions and stored reports.
//!
//! All payloads are JSON rendered with [`canonical_json`], the same
//! renderer the command line uses for its output files, so numbers served
//! here match the CLI byte for byte. Mutating calls require an
//! `X-Annotator` header and are synced to the project's annotation log
//! before the response is sent.

mod schema;
mod tasks;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use selfscope_core::annotation::{agreement_matrix, AdjudicationDecision, AnnotationRecord, Disagreement, Origin};
use selfscope_core::corpus::UnitLevel;
use selfscope_core::models::{ExpertRouter, ModelRegistry};
use selfscope_core::ontology::{Depth, LabelPath};
use selfscope_core::project::{canonical_json, predict_units, Project};
use selfscope_core::store::{LogEntry, SkipRecord};
use selfscope_core::Error;

pub use tasks::{AnnotationTask, TaskStatus};

pub const ANNOTATOR_HEADER: &str = "x-annotator";
pub const DEFAULT_PORT: u16 = 7878;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub root: PathBuf,
    pub bind: SocketAddr,
    /// Seeds the per-project task order.
    pub seed: u64,
}

impl ServiceConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            root: root.into(),
            bind: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            seed: 0,
        }
    }
}

struct Inner {
    project: Project,
    registry: ModelRegistry,
    router: ExpertRouter,
    order: Vec<String>,
}

/// Shared service state. Reads take a shared lock and see one consistent
/// snapshot; writes are serialized.
pub struct ServiceState {
    inner: RwLock<Inner>,
}

impl ServiceState {
    pub fn open(root: impl Into<PathBuf>, seed: u64) -> selfscope_core::Result<Self> {
        Self::from_project(Project::open(root)?, seed)
    }

    pub fn from_project(project: Project, seed: u64) -> selfscope_core::Result<Self> {
        let registry = project.load_models()?;
        let router = project
            .router()?
            .unwrap_or_else(|| ExpertRouter::from_registry(&registry));
        let order = tasks::task_order(&project, seed);
        Ok(ServiceState {
            inner: RwLock::new(Inner {
                project,
                registry,
                router,
                order,
            }),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::UnknownInstance(_) => (StatusCode::NOT_FOUND, "unknown_instance"),
            Error::NoRoute(_) | Error::MissingModel { .. } => (StatusCode::NOT_FOUND, "missing_model"),
            Error::MalformedPath(_)
            | Error::UnknownAspect(_)
            | Error::UnknownElement { .. }
            | Error::UnknownMode { .. } => (StatusCode::BAD_REQUEST, "invalid_path"),
            Error::InvalidInput(_) | Error::Parse(_) | Error::UndefinedCosine => {
                (StatusCode::BAD_REQUEST, "invalid_input")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    kind: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = canonical_json(&ErrorBody {
            error: ErrorDetail {
                kind: self.kind,
                message: &self.message,
            },
        });
        json(self.status, body)
    }
}

type ApiResult = Result<Response, ApiError>;

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn ok<T: Serialize + ?Sized>(value: &T) -> ApiResult {
    Ok(json(StatusCode::OK, canonical_json(value)))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn annotator(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or_else(|| ApiError::bad_request("missing X-Annotator header"))
}

fn read(state: &ServiceState) -> std::sync::RwLockReadGuard<'_, Inner> {
    state.inner.read().unwrap_or_else(|p| p.into_inner())
}

fn write(state: &ServiceState) -> std::sync::RwLockWriteGuard<'_, Inner> {
    state.inner.write().unwrap_or_else(|p| p.into_inner())
}

fn resolve(inner: &Inner, path: &str) -> Result<LabelPath, ApiError> {
    Ok(inner.project.ontology.resolve(path)?)
}

fn check_instance(inner: &Inner, id: &str) -> Result<(), ApiError> {
    match inner.project.instance(id) {
        Some(_) => Ok(()),
        None => Err(Error::UnknownInstance(id.to_string()).into()),
    }
}

pub fn app(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/ontology", get(ontology))
        .route("/schema", get(schema_doc))
        .route("/tasks/next", get(next_task))
        .route("/tasks/skip", post(skip_task))
        .route("/annotations", post(post_annotation))
        .route("/agreement", get(agreement))
        .route("/disagreements", get(disagreements))
        .route("/adjudications", post(post_adjudication))
        .route("/predict", post(predict))
        .route("/reports/{id}", get(report))
        .with_state(state)
}

async fn ontology(State(state): State<Arc<ServiceState>>) -> ApiResult {
    ok(&read(&state).project.ontology)
}

async fn schema_doc() -> ApiResult {
    ok(&schema::document())
}

#[derive(Deserialize)]
struct TaskQuery {
    annotator: Option<String>,
    /// Comma-separated label paths; every aspect when absent.
    paths: Option<String>,
}

#[derive(Serialize)]
struct NextTask {
    task: Option<AnnotationTask>,
}

fn parse_paths(inner: &Inner, paths: Option<&str>) -> Result<Vec<LabelPath>, ApiError> {
    match paths {
        None => Ok(inner.project.ontology.enumerate_paths(Depth::Aspect)),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| resolve(inner, p))
            .collect(),
    }
}

async fn next_task(
    State(state): State<Arc<ServiceState>>,
    headers: HeaderMap,
    Query(q): Query<TaskQuery>,
) -> ApiResult {
    let who = match q.annotator.filter(|a| !a.is_empty()) {
        Some(a) => a,
        None => annotator(&headers)?,
    };
    let inner = read(&state);
    let paths = parse_paths(&inner, q.paths.as_deref())?;
    let task = tasks::next_task(&inner.project, &inner.order, &who, &paths);
    ok(&NextTask { task })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SkipBody {
    instance_id: String,
}

async fn skip_task(State(state): State<Arc<ServiceState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let who = annotator(&headers)?;
    let body: SkipBody = parse_body(&body)?;
    let mut inner = write(&state);
    check_instance(&inner, &body.instance_id)?;
    let record = SkipRecord {
        instance_id: body.instance_id,
        annotator_id: who,
        timestamp: Utc::now(),
    };
    inner.project.store.append(LogEntry::Skip(record.clone()))?;
    Ok(json(StatusCode::CREATED, canonical_json(&record)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationBody {
    instance_id: String,
    path: String,
    value: String,
}

async fn post_annotation(State(state): State<Arc<ServiceState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let who = annotator(&headers)?;
    let body: AnnotationBody = parse_body(&body)?;
    let mut inner = write(&state);
    check_instance(&inner, &body.instance_id)?;
    let path = resolve(&inner, &body.path)?;
    let domain = inner.project.ontology.value_domain(&path)?;
    if !domain.contains(&body.value) {
        return Err(ApiError::bad_request(format!(
            "value \"{}\" is not valid for path \"{path}\"",
            body.value
        )));
    }
    let record = AnnotationRecord {
        instance_id: body.instance_id,
        annotator_id: who,
        path,
        value: body.value,
        timestamp: Utc::now(),
        origin: Origin::Human,
    };
    inner.project.store.put(record.clone())?;
    Ok(json(StatusCode::CREATED, canonical_json(&record)))
}

#[derive(Deserialize)]
struct PathQuery {
    path: String,
}

async fn agreement(State(state): State<Arc<ServiceState>>, Query(q): Query<PathQuery>) -> ApiResult {
    let inner = read(&state);
    let path = resolve(&inner, &q.path)?;
    ok(&agreement_matrix(inner.project.store.state(), &path)?)
}

/// A queue entry with the instance text attached.
#[derive(Serialize)]
struct QueueEntry<'a> {
    #[serde(flatten)]
    disagreement: Disagreement,
    text: &'a str,
}

async fn disagreements(State(state): State<Arc<ServiceState>>, Query(q): Query<PathQuery>) -> ApiResult {
    let inner = read(&state);
    let path = resolve(&inner, &q.path)?;
    let queue: Vec<QueueEntry> = inner
        .project
        .store
        .state()
        .disagreements(&path)
        .into_iter()
        .map(|d| {
            let text = inner.project.instance(&d.instance_id).map_or("", |i| i.text.as_str());
            QueueEntry { disagreement: d, text }
        })
        .collect();
    ok(&queue)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdjudicationBody {
    instance_id: String,
    path: String,
    value: String,
    /// Label-state token from the disagreement queue.
    version: String,
}

#[derive(Serialize)]
struct Conflict<'a> {
    error: ErrorDetail<'a>,
    current_version: String,
}

async fn post_adjudication(State(state): State<Arc<ServiceState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let who = annotator(&headers)?;
    let body: AdjudicationBody = parse_body(&body)?;
    let mut inner = write(&state);
    check_instance(&inner, &body.instance_id)?;
    let path = resolve(&inner, &body.path)?;
    if !inner.project.ontology.value_domain(&path)?.contains(&body.value) {
        return Err(ApiError::bad_request(format!(
            "value \"{}\" is not valid for path \"{path}\"",
            body.value
        )));
    }
    let current = inner.project.store.state().label_state_token(&body.instance_id, &path);
    if current != body.version {
        let conflict = Conflict {
            error: ErrorDetail {
                kind: "stale_adjudication",
                message: "labels changed since the queue was fetched",
            },
            current_version: current,
        };
        return Ok(json(StatusCode::CONFLICT, canonical_json(&conflict)));
    }
    let decision = AdjudicationDecision {
        instance_id: body.instance_id,
        path,
        value: body.value,
        adjudicator_id: who,
        version: current,
        timestamp: Utc::now(),
    };
    inner.project.store.append(LogEntry::Adjudication(decision.clone()))?;
    Ok(json(StatusCode::CREATED, canonical_json(&decision)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictBody {
    text: String,
    #[serde(default)]
    paths: Option<Vec<String>>,
    #[serde(default)]
    level: Option<UnitLevel>,
    #[serde(default)]
    instance_id: Option<String>,
}

#[derive(Serialize)]
struct PredictResponse<T> {
    units: Vec<T>,
}

async fn predict(State(state): State<Arc<ServiceState>>, body: Bytes) -> ApiResult {
    let body: PredictBody = parse_body(&body)?;
    if body.text.trim().is_empty() {
        return Err(ApiError::bad_request("empty text"));
    }
    let inner = read(&state);
    let paths = match &body.paths {
        Some(list) => list.iter().map(|p| resolve(&inner, p)).collect::<Result<Vec<_>, _>>()?,
        None => inner.router.routes.keys().cloned().collect(),
    };
    if paths.is_empty() {
        return Err(ApiError::not_found("no trained models in this project"));
    }
    let units = predict_units(
        body.instance_id.as_deref().unwrap_or("input"),
        &body.text,
        body.level.unwrap_or(UnitLevel::Document),
        &paths,
        &inner.router,
        &inner.registry,
        |id| inner.project.instance(id).map(|i| i.text.clone()),
    )?;
    ok(&PredictResponse { units })
}

async fn report(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult {
    let inner = read(&state);
    match inner.project.report(&id)? {
        Some(text) => Ok(json(StatusCode::OK, text)),
        None => Err(ApiError::not_found(format!("no report \"{id}\""))),
    }
}

/// Binds `config.bind` and serves until interrupted. `on_bound` receives the
/// actual address, which differs from the requested one for port 0.
pub async fn serve(config: ServiceConfig, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let state = ServiceState::open(&config.root, config.seed).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, app(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Blocking wrapper around [`serve`] with its own runtime.
pub fn run(config: ServiceConfig, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(config, on_bound))
}
