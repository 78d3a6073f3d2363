//! JSON API over a loaded catalog and its vector indices.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /v1/query` | retrieval, optionally followed by the LLM step |
//! | `GET /v1/datasets/{id}` | one metadata record |
//! | `GET /v1/datasets?query=&page=&per_page=` | case-insensitive name search |
//! | `GET /healthz` | liveness |
//!
//! State is read-only after startup. Pipeline calls run on the blocking pool,
//! at most `max_inflight` at a time.

mod error;
mod query;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::{Json, Router};
use scout_core::evaluation::IndexSet;
use scout_core::pipeline::{LlmClient, RunLog};
use scout_core::{Catalog, CompositionMode, DatasetMetadata, EmbeddingProvider};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use error::{ApiError, ErrorBody};
pub use query::{run_query, EntryView, HitView, OutcomeView, QueryRequest, QueryResponse};

pub const SCOUT_ADDR: &str = "SCOUT_ADDR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
const MAX_PER_PAGE: usize = 100;

#[derive(Clone)]
pub struct AppState {
    pub catalog: Arc<Catalog>,
    pub indices: Arc<IndexSet>,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub llm: Option<Arc<dyn LlmClient>>,
    pub run_log: Option<Arc<RunLog>>,
    inflight: Arc<Semaphore>,
}

impl AppState {
    pub fn new(
        catalog: Catalog,
        indices: IndexSet,
        provider: Arc<dyn EmbeddingProvider>,
        llm: Option<Arc<dyn LlmClient>>,
    ) -> Self {
        AppState {
            catalog: Arc::new(catalog),
            indices: Arc::new(indices),
            provider,
            llm,
            run_log: None,
            inflight: Arc::new(Semaphore::new(8)),
        }
    }

    pub fn with_run_log(mut self, log: RunLog) -> Self {
        self.run_log = Some(Arc::new(log));
        self
    }

    /// Caps concurrent pipeline calls, and with them outbound provider calls.
    pub fn with_max_inflight(mut self, n: usize) -> Self {
        self.inflight = Arc::new(Semaphore::new(n.max(1)));
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Allowed browser origin; `*` allows any. `None` disables CORS headers.
    pub cors_origin: Option<String>,
}

pub fn router(state: AppState, config: &ServerConfig) -> Router {
    let app = Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/query", post(query_handler))
        .route("/v1/datasets", get(search_datasets))
        .route("/v1/datasets/{id}", get(get_dataset))
        .with_state(state);
    match config.cors_origin.as_deref() {
        None => app,
        Some(origin) => {
            let allow = if origin == "*" {
                AllowOrigin::any()
            } else {
                match HeaderValue::from_str(origin) {
                    Ok(v) => AllowOrigin::exact(v),
                    Err(_) => {
                        tracing::warn!(origin, "ignoring invalid CORS origin");
                        return app;
                    }
                }
            };
            app.layer(
                CorsLayer::new()
                    .allow_origin(allow)
                    .allow_methods([Method::GET, Method::POST])
                    .allow_headers([axum::http::header::CONTENT_TYPE]),
            )
        }
    }
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    datasets: usize,
    modes: Vec<CompositionMode>,
    provider_id: String,
    llm: Option<String>,
}

async fn healthz(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok",
        datasets: state.catalog.len(),
        modes: state.indices.modes().collect(),
        provider_id: state.provider.provider_id().to_string(),
        llm: state.llm.as_ref().map(|l| l.model_id().to_string()),
    })
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<DatasetMetadata>, ApiError> {
    state
        .catalog
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(&id))
}

#[derive(Debug, Deserialize)]
struct SearchParams {
    #[serde(default)]
    query: String,
    page: Option<usize>,
    per_page: Option<usize>,
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    id: String,
    name: String,
    tags: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SearchPage {
    query: String,
    page: usize,
    per_page: usize,
    total: usize,
    items: Vec<DatasetSummary>,
}

async fn search_datasets(
    State(state): State<AppState>,
    params: Result<Query<SearchParams>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<SearchPage>, ApiError> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let page = params.page.unwrap_or(1);
    let per_page = params.per_page.unwrap_or(20);
    if page == 0 || per_page == 0 || per_page > MAX_PER_PAGE {
        return Err(ApiError::bad_request(format!(
            "page must be at least 1 and per_page between 1 and {MAX_PER_PAGE}"
        )));
    }
    let matches = state.catalog.search_names(&params.query);
    let items = matches
        .iter()
        .skip((page - 1).saturating_mul(per_page))
        .take(per_page)
        .map(|m| DatasetSummary {
            id: m.id.clone(),
            name: m.name.clone(),
            tags: m.tags.clone(),
        })
        .collect();
    Ok(Json(SearchPage {
        query: params.query,
        page,
        per_page,
        total: matches.len(),
        items,
    }))
}

async fn query_handler(
    State(state): State<AppState>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let _permit = state
        .inflight
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::unavailable("server is shutting down"))?;
    let worker = state.clone();
    tokio::task::spawn_blocking(move || run_query(&worker, req))
        .await
        .map_err(|e| ApiError::internal(format!("query worker failed: {e}")))?
        .map(Json)
}
