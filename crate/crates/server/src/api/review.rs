use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{NaiveDate, Utc};
use cueguard_core::feedback::{
    promote_corrections, verdicts_csv, Corrections, Grouping, PeriodPrecision, ReviewRecord, ReviewSample, SampleStatus,
    Verdict, VerdictCounts,
};
use serde::{Deserialize, Serialize};

use super::{authorize, csv_response, FormatQuery, Shared};
use crate::error::ApiError;

pub(super) fn routes() -> Router<Shared> {
    Router::new()
        .route("/v1/review/samples", get(samples))
        .route("/v1/review/verdicts", get(list_verdicts).post(submit_verdict))
        .route("/v1/review/proposals", get(proposals))
        .route("/v1/metrics/precision", get(precision))
}

#[derive(Debug, Deserialize)]
struct SampleQuery {
    date: Option<NaiveDate>,
    status: Option<SampleStatus>,
}

/// Samples for `date`, drawing the day's sample on first request. Without
/// a date, every stored sample.
async fn samples(
    State(state): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<SampleQuery>,
) -> Result<Json<Vec<ReviewSample>>, ApiError> {
    authorize(&state, &headers)?;
    if let Some(date) = q.date {
        state.ensure_samples(date)?;
    }
    let store = state.review();
    let selected: Vec<ReviewSample> = match q.date {
        Some(date) => store.samples_for(date).into_iter().cloned().collect(),
        None => store.samples().cloned().collect(),
    };
    Ok(Json(selected.into_iter().filter(|s| q.status.is_none_or(|st| s.status == st)).collect()))
}

#[derive(Debug, Deserialize)]
struct VerdictRequest {
    sample_id: String,
    reviewer: String,
    /// One of MustSafe, LookSafe, Harm, CannotDecide. Omit with `skip`.
    verdict: Option<String>,
    #[serde(default)]
    skip: bool,
}

#[derive(Serialize)]
#[serde(untagged)]
enum VerdictResponse {
    Recorded(ReviewRecord),
    Skipped { sample_id: String, status: SampleStatus },
}

async fn submit_verdict(
    State(state): State<Shared>,
    headers: HeaderMap,
    Json(req): Json<VerdictRequest>,
) -> Result<(StatusCode, Json<VerdictResponse>), ApiError> {
    authorize(&state, &headers)?;
    let mut store = state.review();
    let response = match (req.skip, req.verdict) {
        (true, None) => {
            store.mark_skipped(&req.sample_id)?;
            VerdictResponse::Skipped { sample_id: req.sample_id, status: SampleStatus::Skipped }
        }
        (false, Some(v)) => {
            let verdict: Verdict = v.parse().map_err(|e: cueguard_core::feedback::UnknownVerdict| ApiError::bad_request(e.to_string()))?;
            VerdictResponse::Recorded(store.record_verdict(&req.sample_id, verdict, &req.reviewer, Utc::now())?)
        }
        _ => return Err(ApiError::bad_request("give exactly one of verdict or skip")),
    };
    state.save_review(&store).map_err(|e| ApiError::internal(format!("verdict not saved: {e}")))?;
    Ok((StatusCode::CREATED, Json(response)))
}

async fn list_verdicts(State(state): State<Shared>, headers: HeaderMap, Query(q): Query<FormatQuery>) -> Result<Response, ApiError> {
    authorize(&state, &headers)?;
    let store = state.review();
    Ok(if q.wants_csv() { csv_response(verdicts_csv(&store)) } else { Json(store.records().to_vec()).into_response() })
}

async fn proposals(State(state): State<Shared>, headers: HeaderMap) -> Result<Json<Corrections>, ApiError> {
    authorize(&state, &headers)?;
    let store = state.review();
    Ok(Json(promote_corrections(store.records(), store.samples(), &state.config.splitter())))
}

#[derive(Debug, Deserialize)]
struct PrecisionQuery {
    group: Option<String>,
}

#[derive(Serialize)]
struct PrecisionView {
    group: Grouping,
    overall: Option<f64>,
    counts: VerdictCounts,
    periods: Vec<PeriodPrecision>,
}

async fn precision(State(state): State<Shared>, Query(q): Query<PrecisionQuery>) -> Result<Json<PrecisionView>, ApiError> {
    let group: Grouping = q.group.as_deref().unwrap_or("day").parse().map_err(|e: String| ApiError::bad_request(e))?;
    let store = state.review();
    let counts = VerdictCounts::tally(store.records());
    Ok(Json(PrecisionView { group, overall: counts.harm_precision().ok(), counts, periods: store.precision_by(group) }))
}
