//! Read-only HTTP API over a loaded index snapshot.
//!
//! Every JSON body carries `version` and `fingerprint`; every response also
//! carries them as `x-engine-version` and `x-index-fingerprint` headers.
//! Errors are `{code, message, field}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use biosearch_core::engine::ENGINE_VERSION;
use biosearch_core::kg::{write_graph, FacetField, FacetFilter, GraphFormat};
use biosearch_core::{Engine, EngineConfig, Error};
use serde::Serialize;
use serde_json::Value;
use tokio::sync::Semaphore;

#[derive(Clone)]
pub struct AppState {
    engine: Option<Arc<Engine>>,
    unavailable: String,
    limit: Arc<Semaphore>,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        let permits = engine.config().service.max_concurrency;
        Self {
            engine: Some(Arc::new(engine)),
            unavailable: String::new(),
            limit: Arc::new(Semaphore::new(permits)),
        }
    }

    /// A service with no index; queries answer 503 with `reason`.
    pub fn unavailable(reason: impl Into<String>) -> Self {
        Self {
            engine: None,
            unavailable: reason.into(),
            limit: Arc::new(Semaphore::new(1)),
        }
    }

    fn fingerprint(&self) -> Option<&str> {
        self.engine.as_deref().map(Engine::fingerprint)
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>, field: Option<&str>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: field.map(str::to_string),
        }
    }

    fn bad_field(field: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message, Some(field))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::EmptyQuery => Self::bad_field("q", message),
            Error::Parse { field, .. } => Self::new(StatusCode::BAD_REQUEST, "invalid_request", message, Some(&field)),
            Error::Config(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_request", message, None),
            Error::NotFound { .. } => Self::new(StatusCode::NOT_FOUND, "not_found", message, None),
            Error::Remote(_) => Self::new(StatusCode::BAD_GATEWAY, "plugin_error", message, None),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, None),
        }
    }
}

fn stamp(mut resp: Response, fingerprint: Option<&str>) -> Response {
    let h = resp.headers_mut();
    h.insert("x-engine-version", HeaderValue::from_static(ENGINE_VERSION));
    if let Some(fp) = fingerprint.and_then(|f| HeaderValue::from_str(f).ok()) {
        h.insert("x-index-fingerprint", fp);
    }
    resp
}

fn json_response(status: StatusCode, body: impl Serialize, fingerprint: Option<&str>) -> Response {
    let mut value = serde_json::to_value(body).expect("serializable");
    if let Value::Object(map) = &mut value {
        map.insert("version".into(), Value::from(ENGINE_VERSION));
        map.insert("fingerprint".into(), fingerprint.map_or(Value::Null, Value::from));
    }
    stamp((status, Json(value)).into_response(), fingerprint)
}

type Params = HashMap<String, String>;

fn required<'a>(params: &'a Params, name: &str) -> Result<&'a str, ApiError> {
    match params.get(name) {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(ApiError::bad_field(name, format!("query parameter `{name}` is required"))),
    }
}

fn optional_usize(params: &Params, name: &str) -> Result<Option<usize>, ApiError> {
    params
        .get(name)
        .map(|v| {
            v.parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| ApiError::bad_field(name, format!("`{name}` must be a positive integer")))
        })
        .transpose()
}

fn facets(params: &Params) -> Result<FacetFilter, ApiError> {
    let mut filter = FacetFilter::new();
    for (key, value) in params {
        if let Some(name) = key.strip_prefix("facet.") {
            let field: FacetField = name
                .parse()
                .map_err(|_| ApiError::bad_field(key, format!("unknown facet field `{name}`")))?;
            if value.trim().is_empty() {
                return Err(ApiError::bad_field(key, "facet value must be non-empty"));
            }
            filter = filter.with(field, value.clone());
        }
    }
    Ok(filter)
}

/// Runs a blocking engine call under the concurrency limit.
async fn with_engine<T, F>(state: &AppState, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Engine) -> Result<T, ApiError> + Send + 'static,
{
    let Some(engine) = state.engine.clone() else {
        let err = ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_index", state.unavailable.clone(), None);
        return json_response(err.status, &err, None);
    };
    let fingerprint = engine.fingerprint().to_string();
    let _permit = state.limit.acquire().await.expect("semaphore open");
    let outcome = tokio::task::spawn_blocking(move || f(&engine)).await;
    match outcome {
        Ok(Ok(body)) => json_response(StatusCode::OK, body, Some(&fingerprint)),
        Ok(Err(err)) => json_response(err.status, &err, Some(&fingerprint)),
        Err(join) => {
            let err = ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", join.to_string(), None);
            json_response(err.status, &err, Some(&fingerprint))
        }
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    stats: Option<biosearch_core::engine::IndexStats>,
    reason: Option<String>,
}

async fn health(State(state): State<AppState>) -> Response {
    let body = match &state.engine {
        Some(e) => Health {
            status: "ok",
            stats: Some(e.stats()),
            reason: None,
        },
        None => Health {
            status: "no_index",
            stats: None,
            reason: Some(state.unavailable.clone()),
        },
    };
    json_response(StatusCode::OK, body, state.fingerprint())
}

async fn spell(State(state): State<AppState>, Query(params): Query<Params>) -> Response {
    let q = match required(&params, "q") {
        Ok(q) => q.to_string(),
        Err(e) => return json_response(e.status, &e, state.fingerprint()),
    };
    with_engine(&state, move |e| Ok(e.spell(&q)?)).await
}

async fn search(State(state): State<AppState>, Query(params): Query<Params>) -> Response {
    let parsed = required(&params, "q").and_then(|q| Ok((q.to_string(), optional_usize(&params, "r")?)));
    let (q, r) = match parsed {
        Ok(v) => v,
        Err(e) => return json_response(e.status, &e, state.fingerprint()),
    };
    with_engine(&state, move |e| Ok(e.search(&q, r)?)).await
}

async fn triplets(State(state): State<AppState>, Query(params): Query<Params>) -> Response {
    let parsed = required(&params, "q")
        .and_then(|q| Ok((q.to_string(), facets(&params)?, optional_usize(&params, "k")?)));
    let (q, filter, k) = match parsed {
        Ok(v) => v,
        Err(e) => return json_response(e.status, &e, state.fingerprint()),
    };
    with_engine(&state, move |e| Ok(e.search_triplets(&q, &filter, k)?)).await
}

async fn qa(State(state): State<AppState>, Query(params): Query<Params>) -> Response {
    let q = match required(&params, "q") {
        Ok(q) => q.to_string(),
        Err(e) => return json_response(e.status, &e, state.fingerprint()),
    };
    with_engine(&state, move |e| Ok(e.qa(&q)?)).await
}

async fn export(State(state): State<AppState>) -> Response {
    let Some(engine) = state.engine.clone() else {
        let err = ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_index", state.unavailable.clone(), None);
        return json_response(err.status, &err, None);
    };
    let _permit = state.limit.acquire().await.expect("semaphore open");
    let fingerprint = engine.fingerprint().to_string();
    let body = tokio::task::spawn_blocking(move || {
        let mut buf = Vec::new();
        write_graph(&engine.export_graph(), GraphFormat::Ndjson, &mut buf).map(|_| buf)
    })
    .await;
    match body {
        Ok(Ok(buf)) => stamp(
            ([(header::CONTENT_TYPE, "application/x-ndjson")], buf).into_response(),
            Some(&fingerprint),
        ),
        Ok(Err(e)) => {
            let err = ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), None);
            json_response(err.status, &err, Some(&fingerprint))
        }
        Err(e) => {
            let err = ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), None);
            json_response(err.status, &err, Some(&fingerprint))
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/spell", get(spell))
        .route("/search", get(search))
        .route("/triplets", get(triplets))
        .route("/qa", get(qa))
        .route("/export/graph", get(export))
        .with_state(state)
}

/// Loads the configured snapshot; a missing or mismatched index is an error.
pub fn load_state(config: &EngineConfig) -> biosearch_core::Result<AppState> {
    config.validate()?;
    let dir = config
        .index_dir
        .clone()
        .ok_or_else(|| Error::Config("no index directory configured (set index_dir or BIOSEARCH_INDEX)".into()))?;
    Ok(AppState::new(Engine::load(&dir, config.clone())?))
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, listen: &str) -> std::io::Result<()> {
    let addr: SocketAddr = listen
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("listen address `{listen}`: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Blocking wrapper around [`serve`] on a fresh multi-threaded runtime.
pub fn run(state: AppState, listen: &str) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(state, listen))
}
