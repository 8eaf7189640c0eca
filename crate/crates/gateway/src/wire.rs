//! Wire format. Every body is a JSON document in canonical form (sorted
//! keys, compact) carrying a mandatory `protocol` field.

use ayvu_core::canonical::{from_canonical_str, to_canonical_string};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    TurnOutcome,
    TraceStep,
    ConsentAck,
    Error,
    Metrics,
}

/// Unit of the outcome stream. `seq` starts at 1 on each stream
/// connection and increases by one per envelope; HTTP replies carry 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEnvelope {
    pub protocol: u32,
    pub kind: EnvelopeKind,
    pub seq: u64,
    pub body: serde_json::Value,
}

impl WireEnvelope {
    pub fn new(kind: EnvelopeKind, seq: u64, body: serde_json::Value) -> Self {
        WireEnvelope {
            protocol: PROTOCOL_VERSION,
            kind,
            seq,
            body,
        }
    }

    pub fn encode(&self) -> String {
        to_canonical_string(self)
    }

    pub fn decode(text: &str) -> Result<WireEnvelope, serde_json::Error> {
        from_canonical_str(text)
    }

    /// Parses the body as a domain type.
    pub fn body_as<T: serde::de::DeserializeOwned>(&self) -> Result<T, serde_json::Error> {
        serde_json::from_value(self.body.clone())
    }
}

/// Body of a `trace_step` envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStepBody {
    pub correlation_id: String,
    pub turn_index: u32,
    pub step_index: usize,
    pub step: ayvu_core::trace::TraceStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    NotFound,
    StreamOrder,
    InvalidScope,
    InvalidConfig,
    ProtocolMismatch,
    BadRequest,
    Unauthorized,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ErrorBody {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ErrorBody {
            code,
            message: message.into(),
            field: None,
        }
    }

    pub fn with_field(mut self, field: Option<&str>) -> Self {
        self.field = field.map(str::to_string);
        self
    }

    pub fn envelope(&self, seq: u64) -> WireEnvelope {
        WireEnvelope::new(EnvelopeKind::Error, seq, serde_json::to_value(self).expect("error body serializes"))
    }
}

impl IntoResponse for ErrorBody {
    fn into_response(self) -> Response {
        (self.code.status(), canonical(&self.envelope(0))).into_response()
    }
}

/// A canonical JSON response body.
pub struct Canonical(pub StatusCode, pub String);

impl IntoResponse for Canonical {
    fn into_response(self) -> Response {
        (self.0, [(axum::http::header::CONTENT_TYPE, "application/json")], self.1).into_response()
    }
}

pub fn canonical<T: Serialize>(value: &T) -> Canonical {
    Canonical(StatusCode::OK, to_canonical_string(value))
}

/// A reply document: `fields` plus the protocol version.
pub fn reply(status: StatusCode, mut fields: serde_json::Map<String, serde_json::Value>) -> Canonical {
    fields.insert("protocol".into(), PROTOCOL_VERSION.into());
    Canonical(status, to_canonical_string(&fields))
}

pub fn envelope_reply(kind: EnvelopeKind, body: serde_json::Value) -> Canonical {
    canonical(&WireEnvelope::new(kind, 0, body))
}

/// Parses a request body and enforces the protocol field.
pub fn parse_request<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ErrorBody> {
    let value: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| ErrorBody::new(ErrorCode::BadRequest, format!("body is not a JSON document: {e}")))?;
    check_protocol(value.get("protocol"))?;
    serde_json::from_value(value).map_err(|e| ErrorBody::new(ErrorCode::BadRequest, e.to_string()))
}

pub fn check_protocol(value: Option<&serde_json::Value>) -> Result<(), ErrorBody> {
    match value {
        None => Err(ErrorBody::new(ErrorCode::ProtocolMismatch, "protocol field is required").with_field(Some("protocol"))),
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION as u64) => Ok(()),
        Some(v) => Err(ErrorBody::new(
            ErrorCode::ProtocolMismatch,
            format!("unsupported protocol {v}; this server speaks {PROTOCOL_VERSION}"),
        )
        .with_field(Some("protocol"))),
    }
}
