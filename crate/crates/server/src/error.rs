use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use expressforge_core::bundle::BundleError;
use expressforge_core::report::ReportError;
use expressforge_core::{ElicitationError, KinematicsError, MotionError, VerificationError};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldIssue {
    pub path: String,
    pub message: String,
}

/// Error body: `{"error": kind, "message": ..., "fields": [{path, message}]}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
    pub fields: Vec<FieldIssue>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "<[FieldIssue]>::is_empty")]
    fields: &'a [FieldIssue],
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation", message)
    }

    pub fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        let message = message.into();
        let mut err = Self::invalid(message.clone());
        err.fields.push(FieldIssue {
            path: path.into(),
            message,
        });
        err
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn not_acceptable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_ACCEPTABLE, "not_acceptable", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: self.kind,
            message: &self.message,
            fields: &self.fields,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<KinematicsError> for ApiError {
    fn from(e: KinematicsError) -> Self {
        match e.joint_index() {
            Some(i) => Self::field(format!("angles_deg[{i}]"), e.to_string()),
            None => Self::field("angles_deg", e.to_string()),
        }
    }
}

impl From<MotionError> for ApiError {
    fn from(e: MotionError) -> Self {
        match e {
            MotionError::InvalidJoints(k) => k.into(),
            MotionError::CannotEmpty => Self::conflict(e.to_string()),
            MotionError::IndexOutOfRange { .. } => Self::field("index", e.to_string()),
            other => Self::invalid(other.to_string()),
        }
    }
}

impl From<ElicitationError> for ApiError {
    fn from(e: ElicitationError) -> Self {
        match e {
            ElicitationError::Motion(m) => m.into(),
            ElicitationError::InvalidTransition { .. } | ElicitationError::NoDraft => Self::conflict(e.to_string()),
            ElicitationError::RatingArity { .. } => Self::field("values", e.to_string()),
            ElicitationError::RatingRange { index, .. } => Self::field(format!("values[{index}]"), e.to_string()),
            other => Self::invalid(other.to_string()),
        }
    }
}

impl From<VerificationError> for ApiError {
    fn from(e: VerificationError) -> Self {
        match &e {
            VerificationError::NotAssigned(_) => Self::not_found(e.to_string()),
            _ if e.is_conflict() => Self::conflict(e.to_string()),
            VerificationError::Arity { field, .. } => Self::field(*field, e.to_string()),
            VerificationError::Range { field, index, .. } => Self::field(format!("{field}[{index}]"), e.to_string()),
            VerificationError::UntouchedArity { .. } => Self::field("untouched", e.to_string()),
            VerificationError::EmptyInterpretation => Self::field("text", e.to_string()),
            _ => Self::internal(e.to_string()),
        }
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        // incomplete coding is a state problem, not a malformed request
        Self::conflict(e.to_string())
    }
}

impl From<BundleError> for ApiError {
    fn from(e: BundleError) -> Self {
        match std::error::Error::source(&e) {
            Some(source) => Self::internal(format!("{e}: {source}")),
            None => Self::internal(e.to_string()),
        }
    }
}
