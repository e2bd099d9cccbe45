use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use innerpond_core::error::ErrorKind;
use serde::{Deserialize, Serialize};

/// JSON error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub retriable: bool,
    /// Id of an entity that was created even though the call failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            retriable: false,
            entity: None,
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("session {id} not found"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

pub fn status_for(kind: ErrorKind, code: &str) -> StatusCode {
    match kind {
        ErrorKind::NotFound => StatusCode::NOT_FOUND,
        ErrorKind::InvalidInput => StatusCode::BAD_REQUEST,
        ErrorKind::Conflict => StatusCode::CONFLICT,
        ErrorKind::Provider if code == "Timeout" => StatusCode::GATEWAY_TIMEOUT,
        ErrorKind::Provider | ErrorKind::Extraction => StatusCode::BAD_GATEWAY,
        ErrorKind::Invariant | ErrorKind::Storage => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<innerpond_core::Error> for ApiError {
    fn from(e: innerpond_core::Error) -> Self {
        let code = e.code();
        let entity = match &e {
            innerpond_core::Error::Incomplete { entity, .. } => Some(entity.clone()),
            _ => None,
        };
        Self {
            status: status_for(e.kind(), code).as_u16(),
            code: code.to_string(),
            message: e.to_string(),
            retriable: e.retriable(),
            entity,
        }
    }
}

impl From<innerpond_core::profile::ProfileError> for ApiError {
    fn from(e: innerpond_core::profile::ProfileError) -> Self {
        innerpond_core::Error::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::warn!(code = %self.code, "{}", self.message);
        }
        (self.status(), Json(self)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use innerpond_core::ids::PositionId;
    use innerpond_core::iposition::IPositionError;

    #[test]
    fn not_found_is_client_error() {
        let e: ApiError = innerpond_core::Error::from(IPositionError::NotFound(PositionId::from("p9"))).into();
        assert_eq!(e.status(), StatusCode::NOT_FOUND);
        assert_eq!(e.code, "NotFound");
        assert!(!e.retriable);
    }

    #[test]
    fn provider_errors_are_server_errors() {
        let e: ApiError = innerpond_core::Error::from(innerpond_core::gateway::GatewayError::Timeout { attempts: 2 }).into();
        assert_eq!(e.status(), StatusCode::GATEWAY_TIMEOUT);
        assert!(e.retriable);
    }
}
