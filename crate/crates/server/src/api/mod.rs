mod analytics;
mod review;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use cueguard_core::classifier::Scores;
use cueguard_core::gateway::{ActiveVersions, Decision, FeedbackReport, QueryRecord, ReportType};
use cueguard_core::rules::{compile_rules_with, DecisionSource, Rule};
use cueguard_core::taxonomy::{taxonomy_document, Category};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::{load_model_file, AppState};

pub type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/taxonomy", get(taxonomy))
        .route("/v1/decide", post(decide))
        .route("/v1/feedback", post(feedback).get(list_feedback))
        .route("/v1/rules", get(list_rules).post(stage_rule))
        .route("/v1/rules/{id}", delete(unstage_rule))
        .route("/v1/reload", post(reload))
        .route("/v1/queries/recent", get(recent_queries))
        .merge(analytics::routes())
        .merge(review::routes())
        .with_state(state)
}

/// Checks the bearer token when one is configured.
pub(crate) fn authorize(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(token) = &state.config.operator_token else { return Ok(()) };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(token.as_str()) {
        Ok(())
    } else {
        Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "operator token required"))
    }
}

/// Parses a JSON body; an empty body yields the default.
pub(crate) fn json_or_default<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

pub(crate) fn csv_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

#[derive(Debug, Default, Deserialize)]
pub(crate) struct FormatQuery {
    pub format: Option<String>,
}

impl FormatQuery {
    pub fn wants_csv(&self) -> bool {
        self.format.as_deref() == Some("csv")
    }
}

#[derive(Serialize)]
struct Health {
    ready: bool,
    model_version: Option<String>,
    model_generation: u64,
    ruleset_version: u64,
}

async fn healthz(State(state): State<Shared>) -> Json<Health> {
    let v = state.gateway.versions();
    Json(Health {
        ready: v.model_version.is_some(),
        model_version: v.model_version,
        model_generation: v.model_generation,
        ruleset_version: v.ruleset_version,
    })
}

async fn taxonomy(State(state): State<Shared>) -> Json<cueguard_core::taxonomy::TaxonomyDocument> {
    Json(taxonomy_document(&state.gateway.options().block_reasons))
}

#[derive(Debug, Deserialize)]
struct DecideRequest {
    query_id: Option<String>,
    text: String,
    #[serde(default)]
    user_pseudonym: Option<String>,
}

/// What callers of `/v1/decide` see.
#[derive(Debug, Serialize)]
pub struct DecisionView {
    pub query_id: String,
    pub label: Category,
    pub source: DecisionSource,
    pub blocked: bool,
    pub cue_prefix: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_reason: Option<String>,
    pub scores: Scores<f64>,
    pub model_version: String,
    pub ruleset_version: u64,
}

impl From<Decision> for DecisionView {
    fn from(d: Decision) -> Self {
        DecisionView {
            query_id: d.query_id,
            label: d.label,
            source: d.source,
            blocked: d.blocked,
            cue_prefix: d.cue_prefix,
            block_reason: d.block_reason,
            scores: d.scores,
            model_version: d.model_version,
            ruleset_version: d.ruleset_version,
        }
    }
}

async fn decide(State(state): State<Shared>, Json(req): Json<DecideRequest>) -> Result<Json<DecisionView>, ApiError> {
    let record = QueryRecord {
        query_id: req.query_id.filter(|id| !id.is_empty()).unwrap_or_else(|| state.gateway.generate_query_id()),
        text: req.text,
        received_at: Utc::now(),
        user_pseudonym: req.user_pseudonym.unwrap_or_default(),
    };
    Ok(Json(state.gateway.decide(&record)?.into()))
}

#[derive(Debug, Deserialize)]
struct FeedbackRequest {
    query_id: String,
    report_type: ReportType,
    #[serde(default)]
    note: String,
}

#[derive(Serialize)]
struct FeedbackAck {
    accepted: bool,
    queue_len: usize,
}

async fn feedback(State(state): State<Shared>, Json(req): Json<FeedbackRequest>) -> Result<Json<FeedbackAck>, ApiError> {
    let ack = state.gateway.record_feedback(FeedbackReport {
        query_id: req.query_id,
        report_type: req.report_type,
        note: req.note,
        submitted_at: Utc::now(),
    })?;
    Ok(Json(FeedbackAck { accepted: ack.accepted, queue_len: ack.queue_len }))
}

async fn list_feedback(State(state): State<Shared>, headers: HeaderMap) -> Result<Json<Vec<FeedbackReport>>, ApiError> {
    authorize(&state, &headers)?;
    Ok(Json(state.gateway.feedback_reports()))
}

#[derive(Serialize)]
struct RulesView {
    ruleset_version: u64,
    active: Vec<Rule>,
    staged: Vec<Rule>,
}

async fn list_rules(State(state): State<Shared>) -> Json<RulesView> {
    Json(RulesView {
        ruleset_version: state.gateway.versions().ruleset_version,
        active: state.gateway.rules(),
        staged: state.staged_rules(),
    })
}

/// Stages a rule for the next reload. The pattern is compiled up front so
/// errors surface here rather than at reload.
async fn stage_rule(
    State(state): State<Shared>,
    headers: HeaderMap,
    Json(rule): Json<Rule>,
) -> Result<(StatusCode, Json<Rule>), ApiError> {
    authorize(&state, &headers)?;
    let probe = Rule { enabled: true, ..rule.clone() };
    compile_rules_with(&[probe], 0, state.config.splitter())?;
    let replaced = state.stage_rule(rule.clone());
    Ok((if replaced { StatusCode::OK } else { StatusCode::CREATED }, Json(rule)))
}

async fn unstage_rule(State(state): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    authorize(&state, &headers)?;
    if state.unstage_rule(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(format!("no staged rule {id}")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReloadRequest {
    rules: bool,
    model: bool,
}

impl Default for ReloadRequest {
    fn default() -> Self {
        ReloadRequest { rules: true, model: false }
    }
}

/// Activates the staged rules and/or re-reads the model file.
async fn reload(State(state): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<ActiveVersions>, ApiError> {
    authorize(&state, &headers)?;
    let req: ReloadRequest = json_or_default(&body)?;
    let model = match (req.model, &state.config.model_path) {
        (false, _) => None,
        (true, Some(path)) => Some(load_model_file(path).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_model", e.to_string()))?),
        (true, None) => return Err(ApiError::bad_request("no model path configured")),
    };
    let rules = req.rules.then(|| state.staged_rules());
    let versions = state.gateway.reload(model, rules.clone())?;
    if let Some(rules) = rules {
        state.save_rules(&rules).map_err(|e| ApiError::internal(format!("rules activated but not saved: {e}")))?;
    }
    Ok(Json(versions))
}

#[derive(Debug, Deserialize)]
struct RecentQuery {
    n: Option<usize>,
}

#[derive(Serialize)]
struct RecentItem {
    query_id: String,
    text: String,
    label: Category,
    blocked: bool,
    decided_at: DateTime<Utc>,
}

/// The last `n` logged queries, newest first, for rule previews.
async fn recent_queries(
    State(state): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<RecentQuery>,
) -> Result<Json<Vec<RecentItem>>, ApiError> {
    authorize(&state, &headers)?;
    let n = q.n.unwrap_or(100).min(10_000);
    let decisions = state.gateway.decisions()?;
    Ok(Json(
        decisions
            .into_iter()
            .rev()
            .take(n)
            .map(|d| RecentItem { query_id: d.query_id, text: d.text, label: d.label, blocked: d.blocked, decided_at: d.decided_at })
            .collect(),
    ))
}
