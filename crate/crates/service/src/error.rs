use alice_core::Error;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

/// Error body returned by every endpoint: `{"code", "message", "details"?}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<&'a Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), details: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
    }

    pub fn busy(id: &str) -> Self {
        Self::new(StatusCode::CONFLICT, "session_busy", format!("session {id} is being modified by another request"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

/// One status and one code per core error variant.
fn classify(e: &Error) -> (StatusCode, &'static str) {
    use StatusCode as S;
    match e {
        Error::MalformedManifest(_) => (S::UNPROCESSABLE_ENTITY, "malformed_manifest"),
        Error::MissingTensor(_) => (S::UNPROCESSABLE_ENTITY, "missing_tensor"),
        Error::DimMismatch { .. } => (S::UNPROCESSABLE_ENTITY, "dim_mismatch"),
        Error::NonFiniteValue { .. } => (S::UNPROCESSABLE_ENTITY, "non_finite_value"),
        Error::InvalidParams(_) => (S::BAD_REQUEST, "invalid_params"),
        Error::TooFewSamples(_) => (S::UNPROCESSABLE_ENTITY, "too_few_samples"),
        Error::NumericalFailure(_) => (S::INTERNAL_SERVER_ERROR, "numerical_failure"),
        Error::NoPairsAvailable => (S::CONFLICT, "no_pairs_available"),
        Error::NoSegmentsFound => (S::UNPROCESSABLE_ENTITY, "no_segments_found"),
        Error::DuplicateSurfaceForm(_) => (S::UNPROCESSABLE_ENTITY, "duplicate_surface_form"),
        Error::InvalidRules(_) => (S::UNPROCESSABLE_ENTITY, "invalid_rules"),
        Error::UnknownSegment(_) => (S::UNPROCESSABLE_ENTITY, "unknown_segment"),
        Error::InvalidClassCount(_) => (S::UNPROCESSABLE_ENTITY, "invalid_class_count"),
        Error::StaleNode { .. } => (S::INTERNAL_SERVER_ERROR, "stale_node"),
        Error::UnknownClass(_) => (S::BAD_REQUEST, "unknown_class"),
        Error::InvalidLabel { .. } => (S::INTERNAL_SERVER_ERROR, "invalid_label"),
        Error::InvalidConfig(_) => (S::BAD_REQUEST, "invalid_config"),
        Error::UnknownTicket(_) => (S::NOT_FOUND, "unknown_ticket"),
        Error::UnknownSample(_) => (S::NOT_FOUND, "unknown_sample"),
        Error::WrongPhase { .. } => (S::CONFLICT, "wrong_phase"),
        Error::PendingTickets(_) => (S::CONFLICT, "pending_tickets"),
        Error::EmptySplit(_) => (S::UNPROCESSABLE_ENTITY, "empty_split"),
        Error::MalformedSnapshot(_) => (S::INTERNAL_SERVER_ERROR, "malformed_snapshot"),
        Error::Io(_) => (S::INTERNAL_SERVER_ERROR, "io"),
        Error::Json(_) => (S::INTERNAL_SERVER_ERROR, "json"),
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = classify(&e);
        let details = match &e {
            Error::PendingTickets(ids) => Some(serde_json::json!({ "pending_tickets": ids })),
            Error::WrongPhase { phase, .. } => Some(serde_json::json!({ "phase": phase })),
            _ => None,
        };
        Self { status, code, message: e.to_string(), details }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body { code: self.code, message: &self.message, details: self.details.as_ref() };
        (self.status, Json(body)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caller_faults_are_4xx() {
        let cases = [
            Error::InvalidConfig("k".into()),
            Error::UnknownTicket(3),
            Error::UnknownSample(9),
            Error::WrongPhase { op: "advance", phase: "done".into() },
            Error::PendingTickets(vec![4]),
            Error::MalformedManifest("x".into()),
        ];
        for e in cases {
            assert!(ApiError::from(e).status.is_client_error());
        }
        assert!(ApiError::from(Error::NumericalFailure("nan".into())).status.is_server_error());
    }

    #[test]
    fn pending_tickets_are_listed() {
        let e = ApiError::from(Error::PendingTickets(vec![2, 5]));
        assert_eq!(e.status, StatusCode::CONFLICT);
        assert_eq!(e.details.unwrap()["pending_tickets"], serde_json::json!([2, 5]));
    }
}
