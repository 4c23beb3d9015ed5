use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use defectforge_core::Error as CoreError;
use serde_json::{json, Value};

/// Error response with a `{code, message, detail}` body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} id {id}"))
    }

    pub fn too_large(limit: usize) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_large",
            format!("body exceeds the {limit}-byte upload limit"),
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let (status, code) = match &e {
            CoreError::Parse { .. } | CoreError::Json(_) => (StatusCode::BAD_REQUEST, "parse"),
            CoreError::Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
            CoreError::Transport(_) => (StatusCode::BAD_GATEWAY, "transport"),
            CoreError::Config(_) => (StatusCode::INTERNAL_SERVER_ERROR, "config"),
            CoreError::FingerprintMismatch { .. } => (StatusCode::CONFLICT, "fingerprint_mismatch"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "synthesis"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "detail": self.detail});
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
