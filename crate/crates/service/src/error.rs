use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use windline_core::ModelError;

/// Error body: `{"error": {"code", "detail", "fields"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
    pub fields: Vec<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: Inner<'a>,
}

#[derive(Serialize)]
struct Inner<'a> {
    code: &'a str,
    detail: &'a str,
    fields: &'a [String],
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        ApiError { status, code, detail: detail.into(), fields: Vec::new() }
    }

    pub fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", detail)
    }

    pub fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body { error: Inner { code: self.code, detail: &self.detail, fields: &self.fields } };
        (self.status, Json(body)).into_response()
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let detail = e.to_string();
        let (status, code) = match &e {
            ModelError::InvalidParams { fields, .. } => {
                return ApiError {
                    status: StatusCode::UNPROCESSABLE_ENTITY,
                    code: "invalid_params",
                    detail,
                    fields: fields.clone(),
                }
            }
            ModelError::Domain(_) => (StatusCode::UNPROCESSABLE_ENTITY, "domain"),
            ModelError::Coverage(_) => (StatusCode::UNPROCESSABLE_ENTITY, "coverage"),
            ModelError::Contract(_) => (StatusCode::BAD_REQUEST, "contract"),
            ModelError::Parse { .. } => (StatusCode::BAD_REQUEST, "parse"),
            ModelError::Json(_) => (StatusCode::BAD_REQUEST, "parse"),
            ModelError::Integration { .. } | ModelError::Numeric(_) => (StatusCode::INTERNAL_SERVER_ERROR, "numeric"),
            ModelError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        };
        ApiError::new(status, code, detail)
    }
}

/// Field named in a serde message such as "missing field `beta`".
fn field_in_message(msg: &str) -> Option<String> {
    for marker in ["missing field `", "unknown field `", "duplicate field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            return rest.split('`').next().map(str::to_string);
        }
    }
    None
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let detail = r.body_text();
        let mut e = ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", detail.clone());
        e.fields.extend(field_in_message(&detail));
        e
    }
}
