//! HTTP JSON facade over one frozen checkpoint.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use profiling_core::checkpoint::checkpoint_hash;
use profiling_core::profile::rank_values;
use profiling_core::{profile, shift, AnyModel, Error as CoreError, GroupQuery, Profiler};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::trace::TraceLayer;

/// Version of the request/response shapes below.
pub const API_VERSION: u32 = 1;
pub const DEFAULT_TOP_N: usize = 10;
pub const DEFAULT_TOP_N_CAP: usize = 100;
const SUGGESTIONS: usize = 5;

pub struct AppState {
    model: AnyModel,
    checkpoint_hash: String,
    top_n_cap: usize,
}

impl AppState {
    pub fn new(model: AnyModel, checkpoint_hash: String, top_n_cap: usize) -> Self {
        AppState {
            model,
            checkpoint_hash,
            top_n_cap,
        }
    }

    pub fn from_checkpoint_bytes(bytes: &[u8], top_n_cap: usize) -> Result<Self, CoreError> {
        let model = AnyModel::from_bytes(bytes, None)?;
        Ok(Self::new(model, checkpoint_hash(bytes), top_n_cap))
    }

    pub fn load(path: &Path, top_n_cap: usize) -> Result<Self, CoreError> {
        let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes, top_n_cap)
    }

    pub fn model(&self) -> &AnyModel {
        &self.model
    }

    fn meta(&self) -> ModelMeta {
        ModelMeta {
            kind: self.model.kind().to_string(),
            checkpoint_hash: self.checkpoint_hash.clone(),
            schema_fingerprint: self.model.schema().fingerprint(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: String,
    pub checkpoint_hash: String,
    pub schema_fingerprint: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRequest {
    #[serde(default)]
    pub known: BTreeMap<String, String>,
    #[serde(default)]
    pub top_n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueProbability {
    pub value: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetExpectation {
    /// Most likely values first, ties by label.
    pub values: Vec<ValueProbability>,
    /// Mass of the values not listed.
    pub other: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileResponse {
    pub api_version: u32,
    pub model: ModelMeta,
    pub fixed: BTreeMap<String, String>,
    pub expectations: BTreeMap<String, FacetExpectation>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftRequest {
    #[serde(default)]
    pub base: BTreeMap<String, String>,
    #[serde(default)]
    pub added: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetShiftBody {
    pub divergence: f64,
    pub top_before: Option<String>,
    pub top_after: Option<String>,
    pub changed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftResponse {
    pub api_version: u32,
    pub model: ModelMeta,
    pub facets: BTreeMap<String, FacetShiftBody>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaFacet {
    pub name: String,
    /// Every accepted value label, most frequent first.
    pub values: Vec<String>,
    pub top_values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaResponse {
    pub api_version: u32,
    pub model: ModelMeta,
    pub facets: Vec<SchemaFacet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub facet: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub suggestions: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{message}")]
    BadRequest { message: String, path: Option<String> },
    #[error("{message}{}", fmt_suggestions(.suggestions))]
    Unprocessable { message: String, facet: Option<String>, suggestions: Vec<String> },
    #[error("internal error (id {id})")]
    Internal { id: String },
}

fn fmt_suggestions(s: &[String]) -> String {
    if s.is_empty() {
        String::new()
    } else {
        format!("; did you mean: {}", s.join(", "))
    }
}

impl ApiError {
    fn from_core(e: CoreError, state: &AppState) -> Self {
        match e {
            CoreError::UnknownFacet { facet, valid } => {
                let mut scored: Vec<(usize, String)> =
                    valid.into_iter().map(|v| (strsim::levenshtein(&facet, &v), v)).collect();
                scored.sort();
                ApiError::Unprocessable {
                    message: format!("unknown facet '{facet}'"),
                    suggestions: scored.into_iter().take(SUGGESTIONS).map(|(_, v)| v).collect(),
                    facet: Some(facet),
                }
            }
            CoreError::UnknownValue { facet, value, suggestions } => ApiError::Unprocessable {
                message: format!("unknown value '{value}' for facet '{facet}'"),
                facet: Some(facet),
                suggestions,
            },
            CoreError::ConflictingFacet(facet) => ApiError::Unprocessable {
                message: format!("facet '{facet}' given conflicting values"),
                facet: Some(facet),
                suggestions: Vec::new(),
            },
            CoreError::InvalidArgument(message) => ApiError::Unprocessable {
                message,
                facet: None,
                suggestions: Vec::new(),
            },
            other => {
                let id = uuid::Uuid::new_v4().to_string();
                tracing::error!(%id, checkpoint = %state.checkpoint_hash, error = %other, "request failed");
                ApiError::Internal { id }
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest { message, path } => (
                StatusCode::BAD_REQUEST,
                ErrorBody {
                    error: "bad_request".into(),
                    message,
                    path,
                    facet: None,
                    suggestions: Vec::new(),
                    id: None,
                },
            ),
            ApiError::Unprocessable { message, facet, suggestions } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                ErrorBody {
                    error: "invalid_query".into(),
                    message,
                    path: None,
                    facet,
                    suggestions,
                    id: None,
                },
            ),
            ApiError::Internal { id } => (
                StatusCode::INTERNAL_SERVER_ERROR,
                ErrorBody {
                    error: "internal".into(),
                    message: "internal error".into(),
                    path: None,
                    facet: None,
                    suggestions: Vec::new(),
                    id: Some(id),
                },
            ),
        };
        (status, Json(body)).into_response()
    }
}

/// Decode a JSON body, reporting the offending field path on failure.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::BadRequest {
            message: e.inner().to_string(),
            path: (path != ".").then_some(path),
        }
    })
}

fn query_of(state: &AppState, known: &BTreeMap<String, String>) -> Result<GroupQuery, ApiError> {
    GroupQuery::from_labels(state.model.schema(), known.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        .map_err(|e| ApiError::from_core(e, state))
}

/// Profile a request; shared by the HTTP handler and the command line.
pub fn build_profile(state: &AppState, req: &ProfileRequest) -> Result<ProfileResponse, ApiError> {
    let top_n = req.top_n.unwrap_or(DEFAULT_TOP_N).min(state.top_n_cap);
    let query = query_of(state, &req.known)?;
    let dist = profile(&state.model, &query).map_err(|e| ApiError::from_core(e, state))?;
    let schema = state.model.schema();
    let mut expectations = BTreeMap::new();
    for e in &dist.expectations {
        let facet = schema.facet(e.facet);
        let labels = facet.vocabulary();
        let order = rank_values(&e.probabilities, labels);
        let values: Vec<ValueProbability> = order
            .iter()
            .take(top_n)
            .map(|&v| ValueProbability {
                value: labels[v as usize].clone(),
                probability: e.probabilities[v as usize],
            })
            .collect();
        let listed: f64 = values.iter().map(|v| v.probability).sum();
        expectations.insert(
            facet.name().to_string(),
            FacetExpectation {
                values,
                other: (1.0 - listed).max(0.0),
            },
        );
    }
    Ok(ProfileResponse {
        api_version: API_VERSION,
        model: state.meta(),
        fixed: req.known.clone(),
        expectations,
    })
}

pub fn build_shift(state: &AppState, req: &ShiftRequest) -> Result<ShiftResponse, ApiError> {
    let base = query_of(state, &req.base)?;
    let added = query_of(state, &req.added)?;
    let report = shift(&state.model, &base, &added).map_err(|e| ApiError::from_core(e, state))?;
    let schema = state.model.schema();
    let facets = report
        .facets
        .iter()
        .map(|f| {
            let facet = schema.facet(f.facet);
            let label = |v: Option<u32>| v.and_then(|v| facet.label(v)).map(str::to_string);
            (
                facet.name().to_string(),
                FacetShiftBody {
                    divergence: f.divergence,
                    top_before: label(f.top_before),
                    top_after: label(f.top_after),
                    changed: f.top_changed(),
                },
            )
        })
        .collect();
    Ok(ShiftResponse {
        api_version: API_VERSION,
        model: state.meta(),
        facets,
    })
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "model": state.model.kind().to_string() }))
}

async fn schema(State(state): State<Arc<AppState>>) -> Json<SchemaResponse> {
    let facets = state
        .model
        .schema()
        .facets()
        .iter()
        .map(|f| SchemaFacet {
            name: f.name().to_string(),
            values: f.vocabulary().to_vec(),
            top_values: f.vocabulary().iter().take(DEFAULT_TOP_N).cloned().collect(),
        })
        .collect();
    Json(SchemaResponse {
        api_version: API_VERSION,
        model: state.meta(),
        facets,
    })
}

async fn run_blocking<T, F>(state: Arc<AppState>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state)).await.unwrap_or_else(|e| {
        let id = uuid::Uuid::new_v4().to_string();
        tracing::error!(%id, error = %e, "worker task failed");
        Err(ApiError::Internal { id })
    })
}

async fn profile_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ProfileResponse>, ApiError> {
    let req: ProfileRequest = parse_body(&body)?;
    run_blocking(state, move |s| build_profile(s, &req)).await.map(Json)
}

async fn shift_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ShiftResponse>, ApiError> {
    let req: ShiftRequest = parse_body(&body)?;
    run_blocking(state, move |s| build_shift(s, &req)).await.map(Json)
}

/// CORS origin policy: `None` allows any origin.
pub fn router(state: Arc<AppState>, cors_origin: Option<HeaderValue>) -> Router {
    let origin = match cors_origin {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/health", get(health))
        .route("/schema", get(schema))
        .route("/profile", post(profile_handler))
        .route("/shift", post(shift_handler))
        .layer(cors)
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr, cors_origin: Option<HeaderValue>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, model = %state.model.kind(), "serving");
    axum::serve(listener, router(state, cors_origin))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
