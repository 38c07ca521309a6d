//! HTTP scoring service.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use survwright_core::cohort::{FeatureKind, FillValue};

use crate::bundle::{ModelBundle, SexScope, Variant};
use crate::scoring::{required_features, score, whatif, ScoreError, ScoreRequest, WhatIfRequest};

/// Error body shared by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, details: Value) -> Self {
        Self {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            details,
        }
    }
}

impl From<ScoreError> for ApiError {
    fn from(e: ScoreError) -> Self {
        let status = match e {
            ScoreError::Model(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string(), e.details())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// One form field of a served model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    pub label: Option<String>,
    pub unit: String,
    pub levels: Vec<String>,
    pub modifiable: bool,
    pub tags: Vec<String>,
    /// The value used when the field is left empty in lenient mode.
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub id: String,
    pub kind: String,
    pub variant: Variant,
    pub sex_scope: SexScope,
    pub version: String,
    pub created_at: String,
    pub input_columns: Vec<String>,
    pub fields: Vec<FieldDescriptor>,
}

pub fn describe(bundle: &ModelBundle) -> ModelDescriptor {
    let schema = bundle.schema();
    let required = required_features(bundle).unwrap_or_default();
    let fields = required
        .iter()
        .filter_map(|name| schema.feature(name))
        .map(|spec| FieldDescriptor {
            name: spec.name.clone(),
            kind: spec.kind,
            label: spec.label.clone(),
            unit: spec.unit.clone(),
            levels: spec.levels().to_vec(),
            modifiable: spec.modifiable,
            tags: spec.tags.clone(),
            default: bundle.preprocessor.imputation.fills.get(&spec.name).map(|f| match f {
                FillValue::Number(x) => json!(x),
                FillValue::Level(s) => json!(s),
            }),
        })
        .collect();
    ModelDescriptor {
        id: bundle.id.clone(),
        kind: bundle.model.kind().into(),
        variant: bundle.variant,
        sex_scope: bundle.sex_scope,
        version: bundle.version.clone(),
        created_at: bundle.created_at.clone(),
        input_columns: bundle.input_columns.clone(),
        fields,
    }
}

/// Immutable after start-up.
#[derive(Debug, Clone)]
pub struct AppState {
    bundles: Arc<IndexMap<String, Arc<ModelBundle>>>,
}

impl AppState {
    pub fn new(bundles: Vec<ModelBundle>) -> Result<Self, String> {
        if bundles.is_empty() {
            return Err("at least one bundle is required".into());
        }
        let mut map = IndexMap::new();
        for b in bundles {
            let id = b.id.clone();
            if map.insert(id.clone(), Arc::new(b)).is_some() {
                return Err(format!("duplicate model id '{id}'"));
            }
        }
        Ok(Self { bundles: Arc::new(map) })
    }

    fn resolve(&self, id: Option<&str>) -> Result<&ModelBundle, ApiError> {
        match id {
            Some(id) => self.bundles.get(id).map(|b| b.as_ref()).ok_or_else(|| {
                ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_model",
                    format!("no model with id '{id}'"),
                    json!({ "available": self.bundles.keys().collect::<Vec<_>>() }),
                )
            }),
            None if self.bundles.len() == 1 => Ok(self.bundles[0].as_ref()),
            None => Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "model_required",
                "several models are served; name one in \"model\"",
                json!({ "available": self.bundles.keys().collect::<Vec<_>>() }),
            )),
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed_json",
            e.to_string(),
            json!({ "line": e.line(), "column": e.column() }),
        )
    })
}

fn log_request(route: &str, model: Option<&str>, status: u16, started: Instant) {
    log::info!(
        "{route} model={} status={status} latency_ms={:.3}",
        model.unwrap_or("-"),
        started.elapsed().as_secs_f64() * 1e3
    );
}

async fn list_models(State(state): State<AppState>) -> Json<Value> {
    let started = Instant::now();
    let models: Vec<ModelDescriptor> = state.bundles.values().map(|b| describe(b)).collect();
    log_request("GET /v1/models", None, 200, started);
    Json(json!({ "models": models }))
}

async fn score_handler(State(state): State<AppState>, body: Bytes) -> Response {
    let started = Instant::now();
    let result = parse_body::<ScoreRequest>(&body).and_then(|req| {
        let bundle = state.resolve(req.model.as_deref())?;
        Ok((bundle.id.clone(), score(bundle, &req)?))
    });
    respond("POST /v1/score", result, started)
}

async fn whatif_handler(State(state): State<AppState>, body: Bytes) -> Response {
    let started = Instant::now();
    let result = parse_body::<WhatIfRequest>(&body).and_then(|req| {
        let bundle = state.resolve(req.base.model.as_deref())?;
        Ok((bundle.id.clone(), whatif(bundle, &req)?))
    });
    respond("POST /v1/whatif", result, started)
}

fn respond<T: Serialize>(route: &str, result: Result<(String, T), ApiError>, started: Instant) -> Response {
    match result {
        Ok((model, body)) => {
            log_request(route, Some(&model), 200, started);
            Json(body).into_response()
        }
        Err(e) => {
            log_request(route, None, e.status, started);
            e.into_response()
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/models", get(list_models))
        .route("/v1/score", post(score_handler))
        .route("/v1/whatif", post(whatif_handler))
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
