//! JSON-over-HTTP classification service.
//!
//! Routes:
//! - `POST /v1/classify` `{"text", "top_n"?}` → ranked classes plus a division rollup
//! - `GET /v1/health` → bundle metadata
//! - `GET /v1/taxonomy/{code}` → the node and its ancestors
//! - `POST /v1/embed` `{"texts"}` → the bundle provider's vectors (same wire
//!   format the remote provider client consumes)

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use isic_core::embedding::{embed, embed_batch, EmbedRequest, EmbedResponse, EmbeddingError};
use isic_core::head::HeadError;
use isic_core::taxonomy::Level;
use isic_core::{EmbeddingProvider, HeadWeights, IsicCode, ModelBundle};

pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<EmbeddingError> for ServiceError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::EmptyText | EmbeddingError::NoTokens(_) => {
                ServiceError::BadRequest(e.to_string())
            }
            EmbeddingError::Provider { .. } | EmbeddingError::InvalidVector { .. } => {
                ServiceError::Unavailable(e.to_string())
            }
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<HeadError> for ServiceError {
    fn from(e: HeadError) -> Self {
        match e {
            HeadError::Embedding(inner) => inner.into(),
            HeadError::DimensionMismatch { .. } => ServiceError::Unavailable(e.to_string()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub text: String,
    #[serde(default)]
    pub top_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedClass {
    pub code: String,
    pub description: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisionShare {
    pub division: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub predictions: Vec<RankedClass>,
    pub division_rollup: Vec<DivisionShare>,
    pub provider_id: String,
    pub bundle_version: String,
}

/// Read-only state shared by every request handler.
pub struct ServiceState {
    pub bundle: ModelBundle,
    pub head: HeadWeights,
    pub provider: Box<dyn EmbeddingProvider>,
    pub version: String,
}

impl ServiceState {
    /// Validate the bundle and connect its provider.
    pub fn from_bundle(bundle: ModelBundle) -> isic_core::Result<Self> {
        let provider = bundle.provider()?;
        Self::with_provider(bundle, provider)
    }

    pub fn with_provider(
        bundle: ModelBundle,
        provider: Box<dyn EmbeddingProvider>,
    ) -> isic_core::Result<Self> {
        let head = bundle.head()?;
        if provider.provider_id() != head.provider_id {
            return Err(isic_core::Error::ProviderMismatch {
                bundle: head.provider_id.clone(),
                given: provider.provider_id().to_string(),
            });
        }
        let version = bundle.version();
        Ok(ServiceState {
            bundle,
            head,
            provider,
            version,
        })
    }
}

/// Key a label rolls up to: its division, or itself at division level and above.
fn rollup_key(code: &IsicCode) -> IsicCode {
    match code.level() {
        Level::Group | Level::Class => code.division().expect("digit code"),
        _ => code.clone(),
    }
}

pub fn classify(
    state: &ServiceState,
    request: &ClassifyRequest,
) -> Result<ClassifyResponse, ServiceError> {
    if request.text.trim().is_empty() {
        return Err(ServiceError::BadRequest("text must not be empty".into()));
    }
    let top_n = request.top_n.unwrap_or(DEFAULT_TOP_N);
    if top_n == 0 {
        return Err(ServiceError::BadRequest("top_n must be at least 1".into()));
    }
    let x = embed(&state.provider, &request.text)?;
    let ranking = state.head.rank(x.as_slice(), state.head.classes())?;

    let mut rollup: BTreeMap<IsicCode, f64> = BTreeMap::new();
    for (code, p) in &ranking {
        *rollup.entry(rollup_key(code)).or_default() += p;
    }
    let mut division_rollup: Vec<DivisionShare> = rollup
        .into_iter()
        .map(|(division, probability)| DivisionShare {
            division: division.to_string(),
            probability,
        })
        .collect();
    division_rollup.sort_by(|a, b| b.probability.total_cmp(&a.probability));

    let predictions = ranking
        .into_iter()
        .take(top_n)
        .map(|(code, probability)| RankedClass {
            description: state
                .bundle
                .taxonomy
                .describe(&code)
                .unwrap_or_default()
                .to_string(),
            code: code.to_string(),
            probability,
        })
        .collect();
    Ok(ClassifyResponse {
        predictions,
        division_rollup,
        provider_id: state.head.provider_id.clone(),
        bundle_version: state.version.clone(),
    })
}

/// Node and ancestor chain for `GET /v1/taxonomy/{code}`.
pub fn taxonomy_lookup(
    state: &ServiceState,
    code: &str,
) -> Result<serde_json::Value, ServiceError> {
    let code = IsicCode::parse(code).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let taxonomy = &state.bundle.taxonomy;
    let node = taxonomy
        .get(&code)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown code {code}")))?;
    let ancestors: Vec<_> = taxonomy
        .ancestors(&code)
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .into_iter()
        .filter_map(|a| taxonomy.get(&a))
        .collect();
    Ok(json!({ "node": node, "ancestors": ancestors }))
}

pub fn embed_texts(
    provider: &dyn EmbeddingProvider,
    request: &EmbedRequest,
) -> Result<EmbedResponse, ServiceError> {
    let texts: Vec<&str> = request.texts.iter().map(String::as_str).collect();
    let vectors = embed_batch(provider, &texts)?;
    let dim = vectors
        .first()
        .map(|v| v.dim())
        .or(provider.dimension())
        .unwrap_or(0);
    Ok(EmbedResponse {
        provider_id: provider.provider_id().to_string(),
        dim,
        vectors: vectors.into_iter().map(|v| v.into_inner()).collect(),
    })
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body)
        .map_err(|e| ServiceError::BadRequest(format!("invalid request body: {e}")))
}

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn classify_handler(
    State(state): State<Arc<ServiceState>>,
    body: Bytes,
) -> Result<Json<ClassifyResponse>, ServiceError> {
    let request: ClassifyRequest = parse_body(&body)?;
    blocking(move || classify(&state, &request)).await.map(Json)
}

async fn health_handler(State(state): State<Arc<ServiceState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "bundle_version": state.version,
        "provider_id": state.head.provider_id,
        "labels": state.head.classes(),
    }))
}

async fn taxonomy_handler(
    State(state): State<Arc<ServiceState>>,
    Path(code): Path<String>,
) -> Result<Json<serde_json::Value>, ServiceError> {
    taxonomy_lookup(&state, &code).map(Json)
}

async fn embed_handler(
    State(provider): State<Arc<dyn EmbeddingProvider>>,
    body: Bytes,
) -> Result<Json<EmbedResponse>, ServiceError> {
    let request: EmbedRequest = parse_body(&body)?;
    blocking(move || embed_texts(provider.as_ref(), &request))
        .await
        .map(Json)
}

/// Serves the `/v1/embed` protocol for any provider.
pub fn embed_router(provider: Arc<dyn EmbeddingProvider>) -> Router {
    Router::new()
        .route("/v1/embed", post(embed_handler))
        .with_state(provider)
}

pub fn router(state: Arc<ServiceState>) -> Router {
    let provider: Arc<dyn EmbeddingProvider> = Arc::new(ProviderHandle(state.clone()));
    Router::new()
        .route("/v1/classify", post(classify_handler))
        .route("/v1/health", get(health_handler))
        .route("/v1/taxonomy/{code}", get(taxonomy_handler))
        .with_state(state)
        .merge(embed_router(provider))
}

/// Lets the embed route borrow the state's provider.
struct ProviderHandle(Arc<ServiceState>);

impl EmbeddingProvider for ProviderHandle {
    fn provider_id(&self) -> &str {
        self.0.provider.provider_id()
    }

    fn dimension(&self) -> Option<usize> {
        self.0.provider.dimension()
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        self.0.provider.embed_texts(texts)
    }
}

/// Bind and serve until ctrl-c.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
