use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use stegokey_api::ErrorBody;
use stegokey_core::config::ConfigError;
use stegokey_core::hierarchy::HierarchyError;
use stegokey_core::payload::PayloadError;
use stegokey_core::poly_keys::KeyError;
use stegokey_core::stego_wav::StegoError;
use stegokey_core::transport::AccessError;

#[derive(Debug)]
pub enum ApiError {
    Access(AccessError),
    /// A membership batch the hierarchy refused; nothing was applied.
    Batch(ConfigError),
    BadRequest(String),
    Internal(String),
}

impl ApiError {
    fn classify(&self) -> (StatusCode, &'static str) {
        use AccessError as A;
        use HierarchyError as H;
        match self {
            Self::Access(A::AccessDenied { .. } | A::Key(KeyError::Hierarchy(H::NotAncestor { .. }))) => {
                (StatusCode::FORBIDDEN, "access_denied")
            }
            Self::Access(A::NotInClass { .. } | A::NotSameClass { .. }) => (StatusCode::FORBIDDEN, "not_permitted"),
            Self::Access(A::Key(KeyError::Hierarchy(H::UnknownClass(_) | H::UnknownUser(_)))) => {
                (StatusCode::NOT_FOUND, "not_found")
            }
            Self::Access(A::NoMatchingKey(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "no_matching_key"),
            Self::Access(A::Stego(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "bad_wav"),
            Self::Access(A::Payload(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "bad_envelope"),
            Self::Access(A::Key(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "key_error"),
            Self::Batch(_) => (StatusCode::CONFLICT, "batch_rejected"),
            Self::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            Self::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Access(e) => e.fmt(f),
            Self::Batch(e) => e.fmt(f),
            Self::BadRequest(m) | Self::Internal(m) => f.write_str(m),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.classify();
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        (status, Json(ErrorBody { code: code.into(), error: self.to_string() })).into_response()
    }
}

impl From<AccessError> for ApiError {
    fn from(e: AccessError) -> Self {
        Self::Access(e)
    }
}

impl From<KeyError> for ApiError {
    fn from(e: KeyError) -> Self {
        Self::Access(e.into())
    }
}

impl From<HierarchyError> for ApiError {
    fn from(e: HierarchyError) -> Self {
        Self::Access(e.into())
    }
}

impl From<StegoError> for ApiError {
    fn from(e: StegoError) -> Self {
        Self::Access(e.into())
    }
}

impl From<PayloadError> for ApiError {
    fn from(e: PayloadError) -> Self {
        Self::Access(e.into())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::BadRequest(e.body_text())
    }
}
