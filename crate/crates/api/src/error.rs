use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use dobj_core::{Error, ErrorCode};
use serde::{Deserialize, Serialize};

/// The wire form of every failure: a code, a message and structured details.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub details: serde_json::Value,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> ApiError {
        ApiError { code, message: message.into(), details: serde_json::json!({}) }
    }

    pub fn parse(message: impl Into<String>) -> ApiError {
        ApiError::new(ErrorCode::Parse, message)
    }

    pub fn validation(message: impl Into<String>) -> ApiError {
        let message = message.into();
        ApiError { code: ErrorCode::Validation, details: serde_json::json!({ "fields": [message.clone()] }), message }
    }

    pub fn status(&self) -> StatusCode {
        status_of(self.code)
    }
}

pub fn status_of(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::Parse => StatusCode::BAD_REQUEST,
        ErrorCode::UnknownId | ErrorCode::UnknownConcept | ErrorCode::NoneSatisfies => StatusCode::NOT_FOUND,
        ErrorCode::Ambiguous | ErrorCode::Conflict | ErrorCode::StaleStore => StatusCode::CONFLICT,
        ErrorCode::Stratification | ErrorCode::Validation | ErrorCode::RuleRejection => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::AccessDenied | ErrorCode::NoAssignment => StatusCode::FORBIDDEN,
        ErrorCode::StateBeyondHead => StatusCode::RANGE_NOT_SATISFIABLE,
        ErrorCode::AuthFailed => StatusCode::UNAUTHORIZED,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError { code: e.code(), message: e.to_string(), details: e.details() }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_code_has_an_error_status() {
        for code in ErrorCode::ALL {
            let s = status_of(code);
            assert!(s.is_client_error(), "{code} -> {s}");
        }
    }

    #[test]
    fn ambiguity_keeps_its_count() {
        let e = ApiError::from(Error::Ambiguous { count: 2 });
        assert_eq!(e.status(), StatusCode::CONFLICT);
        assert_eq!(e.details["count"], 2);
    }
}
