use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cueguard_core::analytics::AnalyticsError;
use cueguard_core::classifier::ClassifierError;
use cueguard_core::feedback::ReviewError;
use cueguard_core::gateway::GatewayError;
use cueguard_core::rules::RuleError;
use serde::Serialize;

/// Error body: `{"error": code, "message": text}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(Body { error: self.code, message: &self.message })).into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let message = e.to_string();
        match e {
            GatewayError::NotReady => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "not_ready", message),
            GatewayError::InvalidQuery(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", message),
            GatewayError::StorageFailure(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", message),
            GatewayError::UnknownQueryId(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_query_id", message),
            GatewayError::NothingToReload => ApiError::new(StatusCode::BAD_REQUEST, "nothing_to_reload", message),
            GatewayError::Classifier(ClassifierError::RemoteFeaturizerUnavailable(_)) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "featurizer_unavailable", message)
            }
            GatewayError::Classifier(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "classifier", message),
            GatewayError::Rules(e) => e.into(),
        }
    }
}

impl From<RuleError> for ApiError {
    fn from(e: RuleError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_rules", e.to_string())
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let message = e.to_string();
        match e {
            ReviewError::UnknownSample(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_sample", message),
            ReviewError::AlreadyLabeled(_) => ApiError::new(StatusCode::CONFLICT, "already_labeled", message),
            ReviewError::Skipped(_) => ApiError::new(StatusCode::CONFLICT, "skipped", message),
            ReviewError::EmptyReviewer => ApiError::new(StatusCode::BAD_REQUEST, "empty_reviewer", message),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        let message = e.to_string();
        match e {
            AnalyticsError::EmptyInput | AnalyticsError::EmptyScope | AnalyticsError::ScopeOutOfRange(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "no_data", message)
            }
            AnalyticsError::InsufficientData(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "insufficient_data", message),
            AnalyticsError::CorruptRecord { .. } | AnalyticsError::Read(_) => ApiError::internal(message),
        }
    }
}
