//! HTTP API over an in-memory session store of datasets and trained models.

// Handlers return ApiError by value; it is built once per failed request.
#![allow(clippy::result_large_err)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use neurocd_core::analytics::{render_markdown, Report};
use neurocd_core::ingest::{dataset_warnings, load_dataset, ValidationReport};
use neurocd_core::payload::{self, ContrastiveRequest, CounterfactualRequest, DiagnoseRequest};
use neurocd_core::train::{fit, TrainConfig, TrainReport};
use neurocd_core::{EncodedDataset, Error, ModelParams};

pub const DEFAULT_PORT: u16 = 8080;

/// An uploaded dataset with the text it was parsed from.
#[derive(Debug)]
pub struct StoredDataset {
    pub source: DatasetUpload,
    pub dataset: EncodedDataset,
    pub report: ValidationReport,
}

#[derive(Debug)]
pub struct StoredModel {
    pub dataset_id: String,
    pub params: ModelParams,
    pub train_report: TrainReport,
    model_json: String,
    report: OnceLock<Report>,
}

impl StoredModel {
    fn new(dataset_id: String, params: ModelParams, train_report: TrainReport) -> Result<Self, Error> {
        let model_json = params.to_json()?;
        Ok(Self {
            dataset_id,
            params,
            train_report,
            model_json,
            report: OnceLock::new(),
        })
    }

    pub fn model_json(&self) -> &str {
        &self.model_json
    }
}

/// Datasets and models by id. Ids are assigned from per-kind counters and
/// never reused; stored entries are never modified.
#[derive(Debug, Default)]
pub struct SessionStore {
    datasets: BTreeMap<String, Arc<StoredDataset>>,
    models: BTreeMap<String, Arc<StoredModel>>,
    next_dataset: u64,
    next_model: u64,
}

impl SessionStore {
    pub fn dataset(&self, id: &str) -> Option<Arc<StoredDataset>> {
        self.datasets.get(id).cloned()
    }

    pub fn model(&self, id: &str) -> Option<Arc<StoredModel>> {
        self.models.get(id).cloned()
    }

    pub fn insert_dataset(&mut self, dataset: StoredDataset) -> String {
        self.next_dataset += 1;
        let id = format!("d{}", self.next_dataset);
        self.datasets.insert(id.clone(), Arc::new(dataset));
        id
    }

    /// Fails when `model.dataset_id` is not stored.
    pub fn insert_model(&mut self, model: StoredModel) -> Option<String> {
        if !self.datasets.contains_key(&model.dataset_id) {
            return None;
        }
        self.next_model += 1;
        let id = format!("m{}", self.next_model);
        self.models.insert(id.clone(), Arc::new(model));
        Some(id)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            next_dataset: self.next_dataset,
            next_model: self.next_model,
            datasets: self
                .datasets
                .iter()
                .map(|(id, d)| (id.clone(), d.source.clone()))
                .collect(),
            models: self
                .models
                .iter()
                .map(|(id, m)| {
                    (
                        id.clone(),
                        ModelSnapshot {
                            dataset_id: m.dataset_id.clone(),
                            model_json: m.model_json.clone(),
                            train_report: m.train_report.clone(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn restore(snapshot: Snapshot) -> Result<Self, Error> {
        let mut store = SessionStore {
            next_dataset: snapshot.next_dataset,
            next_model: snapshot.next_model,
            ..Default::default()
        };
        for (id, source) in snapshot.datasets {
            let stored = ingest_upload(source)?;
            store.datasets.insert(id, Arc::new(stored));
        }
        for (id, m) in snapshot.models {
            let params = ModelParams::from_json(&m.model_json)?;
            let model = StoredModel::new(m.dataset_id, params, m.train_report)?;
            store.models.insert(id, Arc::new(model));
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub dataset_id: String,
    pub model_json: String,
    pub train_report: TrainReport,
}

/// On-disk form of the whole store. Datasets are kept as their source CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub next_dataset: u64,
    pub next_model: u64,
    pub datasets: BTreeMap<String, DatasetUpload>,
    pub models: BTreeMap<String, ModelSnapshot>,
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Where `POST /api/snapshot` writes; snapshots are disabled when unset.
    pub snapshot_path: Option<PathBuf>,
    /// Allowed browser origins; any origin when empty.
    pub cors_origins: Vec<String>,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<RwLock<SessionStore>>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(store: SessionStore, config: ServiceConfig) -> Self {
        Self {
            store: Arc::new(RwLock::new(store)),
            config: Arc::new(config),
        }
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, SessionStore> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, SessionStore> {
        self.store.write().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<u64>,
    pub message: String,
}

/// Uniform error body: `{code, message, details[]}`, plus the full
/// validation report for rejected uploads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub details: Vec<ErrorDetail>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            details: Vec::new(),
            report: None,
        }
    }

    fn not_found(kind: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("no {kind} with id `{id}`"))
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let status = if err.is_user_error() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        let mut out = ApiError::new(status, err.code(), err.to_string());
        if let Error::Validation(report) = err {
            out.details = report
                .errors
                .iter()
                .map(|i| ErrorDetail {
                    field: Some(format!("{:?}", i.code)),
                    row: i.row,
                    message: i.message.clone(),
                })
                .collect();
            out.report = Some(report);
        }
        out
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        match payload::to_json_bytes(&self) {
            Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
            Err(_) => status.into_response(),
        }
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> ApiResult {
    let body = payload::to_json_bytes(value).map_err(ApiError::from)?;
    Ok((status, [(header::CONTENT_TYPE, "application/json")], body).into_response())
}

/// Parses a JSON body, reporting the path of the offending field.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let mut out = ApiError::new(StatusCode::BAD_REQUEST, "MalformedJson", format!("request body: {inner}"));
        out.details.push(ErrorDetail {
            field: (path != ".").then_some(path),
            row: None,
            message: inner.to_string(),
        });
        out
    })
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetUpload {
    pub responses_csv: String,
    pub qmatrix_csv: String,
    #[serde(default)]
    pub items_csv: Option<String>,
}

fn ingest_upload(source: DatasetUpload) -> Result<StoredDataset, Error> {
    let dataset = load_dataset(&source.responses_csv, &source.qmatrix_csv, source.items_csv.as_deref())?;
    let report = dataset_warnings(&dataset);
    Ok(StoredDataset {
        source,
        dataset,
        report,
    })
}

#[derive(Debug, Serialize)]
struct DatasetCreated<'a> {
    dataset_id: String,
    report: &'a ValidationReport,
}

async fn create_dataset(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let upload: DatasetUpload = parse_body(&body)?;
    let stored = blocking(move || ingest_upload(upload).map_err(ApiError::from)).await?;
    let report = stored.report.clone();
    let id = state.write().insert_dataset(stored);
    json_response(
        StatusCode::CREATED,
        &DatasetCreated {
            dataset_id: id,
            report: &report,
        },
    )
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let stored = state.read().dataset(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    json_response(StatusCode::OK, &stored.report)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainRequest {
    dataset_id: String,
    #[serde(default)]
    config: TrainConfig,
}

#[derive(Debug, Serialize)]
struct ModelCreated<'a> {
    model_id: String,
    train_report: &'a TrainReport,
}

async fn create_model(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let request: TrainRequest = parse_body(&body)?;
    let dataset = state
        .read()
        .dataset(&request.dataset_id)
        .ok_or_else(|| ApiError::not_found("dataset", &request.dataset_id))?;
    let dataset_id = request.dataset_id.clone();
    let model = blocking(move || {
        let (params, report) = fit(&dataset.dataset, &request.config)?;
        Ok(StoredModel::new(dataset_id, params, report)?)
    })
    .await?;
    let train_report = model.train_report.clone();
    let id = state
        .write()
        .insert_model(model)
        .ok_or_else(|| ApiError::not_found("dataset", &request.dataset_id))?;
    json_response(
        StatusCode::OK,
        &ModelCreated {
            model_id: id,
            train_report: &train_report,
        },
    )
}

fn lookup_model(state: &AppState, id: &str) -> Result<Arc<StoredModel>, ApiError> {
    state.read().model(id).ok_or_else(|| ApiError::not_found("model", id))
}

async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let model = lookup_model(&state, &id)?;
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/json")],
        model.model_json.clone(),
    )
        .into_response())
}

async fn get_train_report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let model = lookup_model(&state, &id)?;
    json_response(StatusCode::OK, &model.train_report)
}

async fn diagnose(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let model = lookup_model(&state, &id)?;
    let request: DiagnoseRequest = parse_body(&body)?;
    let out = blocking(move || Ok(payload::run_diagnose(&model.params, &request)?)).await?;
    json_response(StatusCode::OK, &out)
}

async fn contrastive(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let model = lookup_model(&state, &id)?;
    let request: ContrastiveRequest = parse_body(&body)?;
    let out = blocking(move || Ok(payload::run_contrastive(&model.params, &request)?)).await?;
    json_response(StatusCode::OK, &out)
}

async fn counterfactual(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let model = lookup_model(&state, &id)?;
    let request: CounterfactualRequest = parse_body(&body)?;
    let out = blocking(move || Ok(payload::run_counterfactual(&model.params, &request)?)).await?;
    json_response(StatusCode::OK, &out)
}

async fn model_report(state: &AppState, id: &str) -> Result<Arc<StoredModel>, ApiError> {
    let model = lookup_model(state, id)?;
    if model.report.get().is_some() {
        return Ok(model);
    }
    let dataset = state
        .read()
        .dataset(&model.dataset_id)
        .ok_or_else(|| ApiError::not_found("dataset", &model.dataset_id))?;
    let m = model.clone();
    blocking(move || {
        m.report.get_or_init(|| payload::build_report(&dataset.dataset, &m.params));
        Ok(())
    })
    .await?;
    Ok(model)
}

async fn analytics(State(state): State<AppState>, Path((id, section)): Path<(String, String)>) -> ApiResult {
    if section != "report" && section != "markdown" && !payload::REPORT_SECTIONS.contains(&section.as_str()) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "NotFound",
            format!("unknown analytics section `{section}`"),
        ));
    }
    let model = model_report(&state, &id).await?;
    let report = model.report.get().expect("report initialized above");
    match section.as_str() {
        "report" => json_response(StatusCode::OK, report),
        "markdown" => Ok((
            StatusCode::OK,
            [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
            render_markdown(report),
        )
            .into_response()),
        name => {
            let value = payload::report_section(report, name).expect("section validated above");
            json_response(StatusCode::OK, &value)
        }
    }
}

#[derive(Debug, Serialize)]
struct SnapshotWritten {
    path: String,
    datasets: usize,
    models: usize,
}

async fn write_snapshot(State(state): State<AppState>) -> ApiResult {
    let Some(path) = state.config.snapshot_path.clone() else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "SnapshotDisabled",
            "the server was started without a snapshot path",
        ));
    };
    let snapshot = state.read().snapshot();
    let counts = (snapshot.datasets.len(), snapshot.models.len());
    let target = path.clone();
    blocking(move || {
        let bytes = payload::to_json_bytes(&snapshot)?;
        std::fs::write(&target, bytes).map_err(Error::from)?;
        Ok(())
    })
    .await?;
    json_response(
        StatusCode::OK,
        &SnapshotWritten {
            path: path.display().to_string(),
            datasets: counts.0,
            models: counts.1,
        },
    )
}

async fn health() -> &'static str {
    "ok"
}

fn cors(config: &ServiceConfig) -> CorsLayer {
    let origin = if config.cors_origins.is_empty() {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(config.cors_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any)
}

pub fn router(state: AppState) -> Router {
    let cors = cors(&state.config);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/datasets", post(create_dataset))
        .route("/api/datasets/{id}", get(get_dataset))
        .route("/api/models", post(create_model))
        .route("/api/models/{id}", get(get_model))
        .route("/api/models/{id}/train_report", get(get_train_report))
        .route("/api/models/{id}/diagnose", post(diagnose))
        .route("/api/models/{id}/explain/contrastive", post(contrastive))
        .route("/api/models/{id}/explain/counterfactual", post(counterfactual))
        .route("/api/models/{id}/analytics/{section}", get(analytics))
        .route("/api/snapshot", post(write_snapshot))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint") })
        .layer(cors)
        .with_state(state)
}

/// Port from the `PORT` environment variable, else [`DEFAULT_PORT`].
pub fn port_from_env() -> Result<u16, Error> {
    match std::env::var("PORT") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("PORT `{v}` is not a valid port number"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

/// Loads the snapshot at the configured path when the file exists.
pub fn initial_store(config: &ServiceConfig) -> Result<SessionStore, Error> {
    match &config.snapshot_path {
        Some(path) if path.exists() => {
            let text = std::fs::read_to_string(path)?;
            SessionStore::restore(serde_json::from_str(&text)?)
        }
        _ => Ok(SessionStore::default()),
    }
}

pub async fn serve(addr: std::net::SocketAddr, config: ServiceConfig) -> Result<(), Error> {
    let store = initial_store(&config)?;
    let app = router(AppState::new(store, config));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
