// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! HTTP endpoints. Every handler reads one snapshot of each store, so a
//! response never mixes two runs.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use epiwatch_core::filter::parse_filter;
use epiwatch_core::kpi::compute_kpis;
use epiwatch_core::scoring::DateRange;
use epiwatch_core::triage::{LogEntry, MetaEventDraft, TriageDraft, TriagePatch};
use epiwatch_core::{Error, StreamKey};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::views;
use crate::workspace::{pick_run, Workspace};

/// Stable machine name and HTTP status for a core error.
pub fn classify(err: &Error) -> (StatusCode, &'static str) {
    use Error::*;
    match err {
        UnknownStream(_) => (StatusCode::NOT_FOUND, "unknown-stream"),
        UnknownRegion(_) => (StatusCode::NOT_FOUND, "unknown-region"),
        NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
        EmptyRun(_) => (StatusCode::NOT_FOUND, "empty-run"),
        NoRuns => (StatusCode::NOT_FOUND, "no-runs"),
        NotApplicable(_) => (StatusCode::NOT_FOUND, "not-applicable"),
        FilterSyntax { .. } => (StatusCode::BAD_REQUEST, "filter-syntax"),
        FilterArity(_) => (StatusCode::BAD_REQUEST, "filter-arity"),
        InvalidKey(..) => (StatusCode::BAD_REQUEST, "invalid-key"),
        InvalidConfig(_) => (StatusCode::BAD_REQUEST, "invalid-config"),
        InsufficientData { .. } => (StatusCode::BAD_REQUEST, "insufficient-data"),
        OutsideFrame(_) => (StatusCode::BAD_REQUEST, "outside-frame"),
        NonFinite(_) => (StatusCode::BAD_REQUEST, "non-finite"),
        Rejected(_) => (StatusCode::BAD_REQUEST, "rejected"),
        Hierarchy(_) => (StatusCode::INTERNAL_SERVER_ERROR, "hierarchy"),
        Json(_) => (StatusCode::BAD_REQUEST, "json"),
        Csv(_) => (StatusCode::BAD_REQUEST, "csv"),
        Toml(_) => (StatusCode::BAD_REQUEST, "toml"),
        Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

impl ApiError {
    fn bad_request(error: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            error,
            message: message.into(),
            position: None,
        }
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let (status, error) = classify(&err);
        let position = match &err {
            Error::FilterSyntax { position, .. } => Some(*position),
            _ => None,
        };
        ApiError {
            status,
            error,
            message: err.to_string(),
            position,
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request("query", r.body_text())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request("body", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    ws: Arc<Workspace>,
    cfg: Arc<ServiceConfig>,
    /// Serialized panel bodies by as_of, tagged with the run they came from.
    panels: Arc<Mutex<BTreeMap<NaiveDate, (String, Bytes)>>>,
}

impl AppState {
    pub fn new(ws: Arc<Workspace>, cfg: ServiceConfig) -> Self {
        AppState {
            ws,
            cfg: Arc::new(cfg),
            panels: Arc::default(),
        }
    }

    pub fn workspace(&self) -> &Arc<Workspace> {
        &self.ws
    }
}

/// Runs store work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        error: "internal",
        message: e.to_string(),
        position: None,
    })?
}

fn parse_key(text: &str) -> ApiResult<StreamKey> {
    Ok(text.parse::<StreamKey>()?)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/rankings", get(rankings))
        .route("/streams/{key}/context", get(context))
        .route("/streams/{key}/evolution", get(evolution))
        .route("/panels", get(panels))
        .route("/events", post(create_event))
        .route("/events/{id}", patch(edit_event))
        .route("/meta-events", post(create_meta_event))
        .route("/sessions/log", post(session_log))
        .route("/kpis", get(kpis))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct RankingQuery {
    pub as_of: Option<NaiveDate>,
    pub k: Option<usize>,
    pub offset: Option<usize>,
    pub filter: Option<String>,
}

async fn rankings(
    State(st): State<AppState>,
    q: Result<Query<RankingQuery>, QueryRejection>,
) -> ApiResult<Json<views::Rankings>> {
    let Query(q) = q?;
    blocking(move || {
        let filter = match q.filter.as_deref().map(str::trim) {
            Some(text) if !text.is_empty() => Some(parse_filter(text)?),
            _ => None,
        };
        let runs = st.ws.runs();
        let run = pick_run(&runs, q.as_of)?;
        let k = q.k.unwrap_or(st.cfg.k_default);
        Ok(Json(views::rankings(
            &st.ws,
            &runs,
            &run,
            k,
            q.offset.unwrap_or(0),
            filter.as_ref(),
        )))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct AsOfQuery {
    pub as_of: Option<NaiveDate>,
}

async fn context(
    State(st): State<AppState>,
    Path(key): Path<String>,
    q: Result<Query<AsOfQuery>, QueryRejection>,
) -> ApiResult<Json<views::StreamContext>> {
    let Query(q) = q?;
    blocking(move || {
        let key = parse_key(&key)?;
        // Without a date, show the data as of the latest run (or today).
        let as_of = match q.as_of {
            Some(d) => d,
            None => st
                .ws
                .run(None)
                .map(|r| r.results.as_of)
                .unwrap_or_else(|_| chrono::Utc::now().date_naive()),
        };
        Ok(Json(views::stream_context(&st.ws, &key, as_of)?))
    })
    .await
}

async fn evolution(
    State(st): State<AppState>,
    Path(key): Path<String>,
    q: Result<Query<AsOfQuery>, QueryRejection>,
) -> ApiResult<Json<views::Evolution>> {
    let Query(q) = q?;
    blocking(move || {
        let key = parse_key(&key)?;
        let runs = st.ws.runs();
        let run = pick_run(&runs, q.as_of)?;
        Ok(Json(views::evolution(&runs, &key, &run)?))
    })
    .await
}

async fn panels(State(st): State<AppState>, q: Result<Query<AsOfQuery>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let body = blocking(move || {
        let run = st.ws.run(q.as_of)?;
        let as_of = run.results.as_of;
        if let Some((run_id, body)) = st.panels.lock().get(&as_of) {
            if *run_id == run.run_id {
                return Ok(body.clone());
            }
        }
        let body = Bytes::from(
            serde_json::to_vec(&views::panels(&st.ws, &run, &st.cfg.map)?).map_err(Error::from)?,
        );
        st.panels.lock().insert(as_of, (run.run_id.clone(), body.clone()));
        Ok(body)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn create_event(
    State(st): State<AppState>,
    body: Result<Json<TriageDraft>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(draft) = body?;
    let record = blocking(move || Ok(st.ws.triage().record_event(draft, st.ws.results())?)).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn edit_event(
    State(st): State<AppState>,
    Path(id): Path<u64>,
    body: Result<Json<TriagePatch>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(patch) = body?;
    let record = blocking(move || Ok(st.ws.triage().edit_event(id, patch)?)).await?;
    Ok(Json(record))
}

async fn create_meta_event(
    State(st): State<AppState>,
    body: Result<Json<MetaEventDraft>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(draft) = body?;
    let meta = blocking(move || Ok(st.ws.triage().record_meta_event(draft)?)).await?;
    Ok((StatusCode::CREATED, Json(meta)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Accepted {
    pub accepted: usize,
}

/// Takes a JSON array of log entries or line-delimited JSON.
async fn session_log(State(st): State<AppState>, body: String) -> ApiResult<Json<Accepted>> {
    blocking(move || {
        let accepted = if body.trim_start().starts_with('[') {
            let entries: Vec<LogEntry> = serde_json::from_str(&body).map_err(Error::from)?;
            st.ws.triage().append_log(entries)?
        } else {
            st.ws.triage().import_log(&body)?
        };
        Ok(Json(Accepted { accepted }))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct PeriodQuery {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

async fn kpis(
    State(st): State<AppState>,
    q: Result<Query<PeriodQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(q) = q?;
    if q.from > q.to {
        return Err(ApiError::bad_request("query", format!("from {} is after to {}", q.from, q.to)));
    }
    let report = blocking(move || Ok(compute_kpis(&st.ws.triage().snapshot(), DateRange::new(q.from, q.to)))).await?;
    Ok(Json(report))
}

/// Serves until ctrl-c, reloading the stores from disk every
/// `refresh_secs` so runs made by the CLI show up.
pub async fn serve(ws: Arc<Workspace>, cfg: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %ws.layout().root.display(), "listening");
    let period = Duration::from_secs(cfg.refresh_secs);
    let refresher = ws.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        tick.tick().await;
        loop {
            tick.tick().await;
            let ws = refresher.clone();
            match tokio::task::spawn_blocking(move || ws.refresh()).await {
                Ok(Ok(true)) => tracing::info!("reloaded stores from disk"),
                Ok(Ok(false)) => {}
                Ok(Err(e)) => tracing::warn!(error = %e, "refresh failed"),
                Err(e) => tracing::warn!(error = %e, "refresh task failed"),
            }
        }
    });
    axum::serve(listener, router(AppState::new(ws, cfg)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
