use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use crate::query::QueryResponse;

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
    /// Retrieval-only result when the failure happened at the LLM step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partial: Option<Box<QueryResponse>>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error,
                message: message.into(),
                dataset_id: None,
                partial: None,
            },
        }
    }

    pub fn not_found(id: &str) -> Self {
        let mut e = Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown dataset `{id}`"));
        e.body.dataset_id = Some(id.to_string());
        e
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn upstream(message: impl Into<String>, partial: Option<QueryResponse>) -> Self {
        let mut e = Self::new(StatusCode::BAD_GATEWAY, "upstream_failure", message);
        e.body.partial = partial.map(Box::new);
        e
    }

    pub fn unavailable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
