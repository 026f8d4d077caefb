use axum::extract::{Query, State};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::NaiveDate;
use cueguard_core::analytics::{
    buckets_csv, bucketize_decisions, category_correlation, correlation_csv, cumulative_series, daily_volume_ratio,
    distribution, distribution_csv, event_window, extract_keywords, keywords_csv, sensitive_ratio, DailyBucket,
    DatePercent, DistributionSnapshot, Scope, SimpleTokenizer, VolumeRatios, DEFAULT_STOPLIST,
};
use cueguard_core::taxonomy::parse_category;
use serde::{Deserialize, Serialize};

use super::{csv_response, FormatQuery, Shared};
use crate::error::ApiError;

pub(super) fn routes() -> Router<Shared> {
    Router::new()
        .route("/v1/analytics/daily", get(daily))
        .route("/v1/analytics/volume", get(volume))
        .route("/v1/analytics/cumulative", get(cumulative))
        .route("/v1/analytics/overall", get(overall))
        .route("/v1/analytics/events", get(events))
        .route("/v1/analytics/correlation", get(correlation))
        .route("/v1/analytics/keywords", get(keywords))
}

fn buckets(state: &Shared) -> Result<Vec<DailyBucket>, ApiError> {
    Ok(bucketize_decisions(&state.gateway.decisions()?))
}

fn snapshot_response(snapshot: DistributionSnapshot, csv: bool) -> Response {
    if csv {
        csv_response(distribution_csv(&snapshot))
    } else {
        Json(snapshot).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct DailyQuery {
    date: Option<NaiveDate>,
    format: Option<String>,
}

#[derive(Serialize)]
struct DayView {
    bucket: DailyBucket,
    distribution: Option<DistributionSnapshot>,
}

/// One day's bucket and distribution, or all buckets without `date`.
async fn daily(State(state): State<Shared>, Query(q): Query<DailyQuery>) -> Result<Response, ApiError> {
    let buckets = buckets(&state)?;
    let csv = q.format.as_deref() == Some("csv");
    let Some(date) = q.date else {
        return Ok(if csv { csv_response(buckets_csv(&buckets)) } else { Json(buckets).into_response() });
    };
    let bucket = buckets
        .iter()
        .find(|b| b.date == date)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("no decisions on {date}")))?;
    let distribution = distribution(&buckets, Scope::Date { date }).ok();
    if csv {
        return Ok(csv_response(buckets_csv(std::slice::from_ref(&bucket))));
    }
    Ok(Json(DayView { bucket, distribution }).into_response())
}

#[derive(Serialize)]
struct VolumeView {
    volume: VolumeRatios,
    sensitive: Vec<DatePercent>,
}

async fn volume(State(state): State<Shared>) -> Result<Json<VolumeView>, ApiError> {
    let buckets = buckets(&state)?;
    Ok(Json(VolumeView { volume: daily_volume_ratio(&buckets)?, sensitive: sensitive_ratio(&buckets) }))
}

#[derive(Debug, Deserialize)]
struct CumulativeQuery {
    upto: Option<NaiveDate>,
    format: Option<String>,
}

/// Snapshot up to `upto`, or the whole cumulative series without it.
async fn cumulative(State(state): State<Shared>, Query(q): Query<CumulativeQuery>) -> Result<Response, ApiError> {
    let buckets = buckets(&state)?;
    match q.upto {
        Some(date) => Ok(snapshot_response(distribution(&buckets, Scope::CumulativeTo { date })?, q.format.as_deref() == Some("csv"))),
        None => Ok(Json(cumulative_series(&buckets)).into_response()),
    }
}

async fn overall(State(state): State<Shared>, Query(q): Query<FormatQuery>) -> Result<Response, ApiError> {
    let buckets = buckets(&state)?;
    Ok(snapshot_response(distribution(&buckets, Scope::Overall)?, q.wants_csv()))
}

#[derive(Debug, Deserialize)]
struct EventQuery {
    start: NaiveDate,
    days: Option<usize>,
}

async fn events(
    State(state): State<Shared>,
    Query(q): Query<EventQuery>,
) -> Result<Json<cueguard_core::analytics::EventWindowReport>, ApiError> {
    let buckets = buckets(&state)?;
    Ok(Json(event_window(&buckets, q.start, q.days)?))
}

async fn correlation(State(state): State<Shared>, Query(q): Query<FormatQuery>) -> Result<Response, ApiError> {
    let matrix = category_correlation(&buckets(&state)?)?;
    Ok(if q.wants_csv() { csv_response(correlation_csv(&matrix)) } else { Json(matrix).into_response() })
}

#[derive(Debug, Deserialize)]
struct KeywordQuery {
    category: String,
    k: Option<usize>,
    /// Comma-separated; replaces the default stoplist.
    stop: Option<String>,
    format: Option<String>,
}

async fn keywords(State(state): State<Shared>, Query(q): Query<KeywordQuery>) -> Result<Response, ApiError> {
    let category = parse_category(&q.category).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let decisions = state.gateway.decisions()?;
    let stop: Vec<&str> = match &q.stop {
        Some(s) => s.split(',').map(str::trim).filter(|s| !s.is_empty()).collect(),
        None => DEFAULT_STOPLIST.to_vec(),
    };
    let report = extract_keywords(&decisions, category, &stop, q.k.unwrap_or(20), &SimpleTokenizer);
    Ok(if q.format.as_deref() == Some("csv") { csv_response(keywords_csv(&report)) } else { Json(report).into_response() })
}
