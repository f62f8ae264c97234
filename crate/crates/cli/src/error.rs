use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use batchedit::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    SolverFailed,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::SolverFailed | ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error shape shared by the CLI (printed to stderr) and the HTTP API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Conflict, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self)
            .unwrap_or_else(|_| format!("{{\"code\":\"internal\",\"message\":{:?}}}", self.message))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::NonFinite {
                stage,
                iteration,
                trace,
            } => ApiError::new(ErrorCode::SolverFailed, message)
                .with_detail(json!({ "stage": stage, "iteration": iteration, "trace": trace })),
            Error::IndexOutOfRange { index, count } => {
                ApiError::not_found(message).with_detail(json!({ "index": index, "count": count }))
            }
            Error::MissingExample
            | Error::MissingDirection
            | Error::NoTestLatents
            | Error::MissingAlphas
            | Error::ZeroDirection => ApiError::conflict(message),
            Error::ChainBroken { gap } => ApiError::conflict(message).with_detail(json!({ "gap": gap })),
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => ApiError::not_found(message),
            Error::Io(_) | Error::Png(_) => ApiError::internal(message),
            Error::DimensionMismatch { .. }
            | Error::DimensionMismatchAt { .. }
            | Error::InvalidDims(_)
            | Error::InvalidConfig(_)
            | Error::NonFiniteInput(_)
            | Error::WrongAttributeCount { .. }
            | Error::AttributeOutOfRange { .. }
            | Error::NoTargetEntry
            | Error::EmptyInput
            | Error::UnsupportedVersion(_)
            | Error::Json(_) => ApiError::bad_request(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
