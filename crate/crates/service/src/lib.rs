//! HTTP adapter over a loaded model bank and evaluation report.
//!
//! Endpoints:
//! - `POST /prescribe`: patient JSON in, prescription JSON out
//! - `GET /models`: bank manifest
//! - `GET /evaluation`: latest evaluation report
//! - `GET /aggregates?by=<attribute>`: subgroup, allocation and agreement tables

pub mod request;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use cadrx_core::evaluation::{AllocationTable, DmlaTable, EvaluationReport, SubgroupAttribute, SubgroupReport};
use cadrx_core::store::{load_bank, BankManifest};
use cadrx_core::{prescribe, ModelBank};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use request::{FieldError, PatientRequest};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] cadrx_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid CORS origin `{0}`")]
    InvalidOrigin(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub bank_dir: Option<PathBuf>,
    pub evaluation_path: Option<PathBuf>,
    /// Origins allowed to call the API from a browser, e.g. the dashboard.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            bank_dir: None,
            evaluation_path: None,
            cors_origins: Vec::new(),
        }
    }
}

pub struct LoadedBank {
    pub bank: ModelBank,
    pub manifest: BankManifest,
}

/// Read-only state shared by every handler.
#[derive(Default)]
pub struct AppState {
    pub bank: Option<LoadedBank>,
    pub evaluation: Option<EvaluationReport>,
}

impl AppState {
    pub fn load(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let bank = match &config.bank_dir {
            Some(dir) => {
                let (bank, manifest) = load_bank(dir)?;
                log::info!("loaded bank from {} ({} entries)", dir.display(), bank.entries.len());
                Some(LoadedBank { bank, manifest })
            }
            None => {
                log::warn!("no bank directory configured; /prescribe will answer 503");
                None
            }
        };
        let evaluation = match &config.evaluation_path {
            Some(p) if p.exists() => Some(read_report(p)?),
            Some(p) => {
                log::warn!(
                    "evaluation report {} not found; /evaluation will answer 404",
                    p.display()
                );
                None
            }
            None => None,
        };
        Ok(AppState { bank, evaluation })
    }
}

fn read_report(path: &Path) -> Result<EvaluationReport, cadrx_core::Error> {
    let body = std::fs::read_to_string(path).map_err(|e| cadrx_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&body)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

fn error(status: StatusCode, message: impl Into<String>, fields: Vec<FieldError>) -> Response {
    let body = ErrorBody {
        error: message.into(),
        fields,
    };
    (status, json_body(&body)).into_response()
}

fn json_body<T: Serialize>(value: &T) -> ([(header::HeaderName, &'static str); 1], Vec<u8>) {
    let bytes = serde_json::to_vec(value).expect("report types serialize");
    ([(header::CONTENT_TYPE, "application/json")], bytes)
}

fn ok<T: Serialize>(value: &T) -> Response {
    (StatusCode::OK, json_body(value)).into_response()
}

async fn prescribe_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let Some(loaded) = &state.bank else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no model bank loaded", Vec::new());
    };
    let req = match request::parse(&body) {
        Ok(r) => r,
        Err(fields) => return error(StatusCode::BAD_REQUEST, "invalid patient", fields),
    };
    match prescribe(req.id(), &req.features(), &loaded.bank) {
        Ok(p) => ok(&p),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), Vec::new()),
    }
}

async fn models_handler(State(state): State<Arc<AppState>>) -> Response {
    match &state.bank {
        Some(b) => ok(&b.manifest),
        None => error(StatusCode::SERVICE_UNAVAILABLE, "no model bank loaded", Vec::new()),
    }
}

async fn evaluation_handler(State(state): State<Arc<AppState>>) -> Response {
    match &state.evaluation {
        Some(r) => ok(r),
        None => error(StatusCode::NOT_FOUND, "no evaluation has been run", Vec::new()),
    }
}

#[derive(Debug, Deserialize)]
pub struct AggregatesQuery {
    pub by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub attribute: SubgroupAttribute,
    pub subgroups: SubgroupReport,
    pub allocation: AllocationTable,
    pub dmla: DmlaTable,
}

/// Slice of an evaluation report for one attribute.
pub fn aggregates(report: &EvaluationReport, attribute: SubgroupAttribute) -> Option<Aggregates> {
    let subgroups = report.subgroups.iter().find(|s| s.attribute == attribute)?.clone();
    Some(Aggregates {
        attribute,
        subgroups,
        allocation: report.allocation.clone(),
        dmla: report.dmla.clone(),
    })
}

async fn aggregates_handler(State(state): State<Arc<AppState>>, Query(q): Query<AggregatesQuery>) -> Response {
    let Some(by) = q.by else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter `by`", Vec::new());
    };
    let attribute = match by.parse::<SubgroupAttribute>() {
        Ok(a) => a,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string(), Vec::new()),
    };
    let Some(report) = &state.evaluation else {
        return error(StatusCode::NOT_FOUND, "no evaluation has been run", Vec::new());
    };
    match aggregates(report, attribute) {
        Some(a) => ok(&a),
        None => error(
            StatusCode::NOT_FOUND,
            format!("report has no `{attribute}` breakdown"),
            Vec::new(),
        ),
    }
}

pub fn cors_layer(origins: &[String]) -> Result<CorsLayer, ServiceError> {
    let values = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::InvalidOrigin(o.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorsLayer::new()
        .allow_origin(AllowOrigin::list(values))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]))
}

pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Result<Router, ServiceError> {
    let router = Router::new()
        .route("/prescribe", post(prescribe_handler))
        .route("/models", get(models_handler))
        .route("/evaluation", get(evaluation_handler))
        .route("/aggregates", get(aggregates_handler))
        .with_state(state);
    Ok(if cors_origins.is_empty() {
        router
    } else {
        router.layer(cors_layer(cors_origins)?)
    })
}

/// Loads artifacts and serves until the process is stopped.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::load(config)?);
    let app = router(state, &config.cors_origins)?;
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.bind.clone(),
            source,
        })?;
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    log::info!("listening on {}", addr.map_or(config.bind.clone(), |a| a.to_string()));
    axum::serve(listener, app).await.map_err(|source| ServiceError::Bind {
        addr: config.bind.clone(),
        source,
    })
}
