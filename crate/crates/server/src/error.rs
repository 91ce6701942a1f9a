use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use slicewise_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(err: CoreError) -> Self {
        let msg = err.to_string();
        match err {
            CoreError::UnknownGroup(_) => ApiError::NotFound(msg),
            CoreError::UnknownMetric { .. }
            | CoreError::UnknownFeature(_)
            | CoreError::UnknownValue { .. }
            | CoreError::EmptySelection
            | CoreError::Config(_)
            | CoreError::NotPredicate(_)
            | CoreError::InvalidRadius(_)
            | CoreError::DuplicateMetric(_) => ApiError::BadRequest(msg),
            CoreError::Malformed { .. }
            | CoreError::Schema(_)
            | CoreError::Label(_)
            | CoreError::EmptyDataset { .. }
            | CoreError::Cluster(_)
            | CoreError::EmptyGroup(_) => ApiError::Unprocessable(msg),
            CoreError::Io(_) | CoreError::SupportMismatch(..) | CoreError::NotNormalized(_) => {
                ApiError::Internal(msg)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if matches!(self, ApiError::Internal(_)) {
            tracing::error!(error = %self, "request failed");
        }
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
