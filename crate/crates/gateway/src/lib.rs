//! HTTP + WebSocket gateway for live sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/v1/sessions` | `{protocol, config?, overrides?}` | `{protocol, session_id}` |
//! | DELETE | `/v1/sessions/{id}` | | `{protocol, deleted}` |
//! | POST | `/v1/sessions/{id}/events` | `{protocol, events}` | `{protocol, accepted, turns}` |
//! | POST | `/v1/sessions/{id}/consent` | `{protocol, scope, change}` | `consent_ack` envelope |
//! | GET | `/v1/sessions/{id}/metrics` | | `metrics` envelope |
//! | GET | `/v1/sessions/{id}/state` | | `{protocol, state}` |
//! | GET | `/v1/sessions/{id}/scopes` | | `{protocol, scopes}` |
//! | GET | `/v1/sessions/{id}/traces/{turn}` | | `{protocol, trace}` |
//! | GET | `/v1/sessions/{id}/stream?protocol=1` | WebSocket | envelopes |
//!
//! Errors are `error` envelopes. The full schema lives in
//! `docs/gateway-protocol.md`.

pub mod actor;
pub mod wire;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use tokio::sync::mpsc;

use ayvu_core::governance::ConsentChange;
use ayvu_core::{InputEvent, Session, SessionConfig, SessionSettings};

use actor::{Command, SessionHandle};
use wire::{check_protocol, envelope_reply, parse_request, reply, EnvelopeKind, ErrorBody, ErrorCode, WireEnvelope};

/// Environment variable holding the bearer token.
pub const TOKEN_ENV: &str = "AYVU_GATEWAY_TOKEN";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("refusing to bind non-loopback address {0} without {TOKEN_ENV} set")]
    TokenRequired(SocketAddr),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct GatewayOptions {
    /// Config used when a create request carries no full config document.
    pub base: Option<SessionConfig>,
    /// Directory against which config documents' relative paths resolve.
    pub base_dir: PathBuf,
    /// When set, every request must present it.
    pub token: Option<String>,
}

struct Inner {
    options: GatewayOptions,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(options: GatewayOptions) -> AppState {
        AppState(Arc::new(Inner {
            options,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }))
    }

    fn session(&self, id: &str) -> Result<SessionHandle, ErrorBody> {
        self.0
            .sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ErrorBody::new(ErrorCode::NotFound, format!("not-found: no session {id}")))
    }
}

/// Non-loopback binds require a token.
pub fn check_bind(addr: SocketAddr, token: Option<&str>) -> Result<(), GatewayError> {
    if addr.ip().is_loopback() || token.is_some_and(|t| !t.is_empty()) {
        Ok(())
    } else {
        Err(GatewayError::TokenRequired(addr))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", axum::routing::delete(delete_session))
        .route("/v1/sessions/{id}/events", post(submit_events))
        .route("/v1/sessions/{id}/consent", post(update_consent))
        .route("/v1/sessions/{id}/metrics", get(metrics))
        .route("/v1/sessions/{id}/state", get(snapshot))
        .route("/v1/sessions/{id}/scopes", get(scopes))
        .route("/v1/sessions/{id}/traces/{turn}", get(trace))
        .route("/v1/sessions/{id}/stream", get(stream))
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

async fn authorize(State(state): State<AppState>, Query(q): Query<TokenQuery>, req: Request, next: Next) -> Response {
    let Some(expected) = state.0.options.token.as_deref() else {
        return next.run(req).await;
    };
    let bearer = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    // Browsers cannot set headers on WebSocket requests, so the query
    // parameter is accepted too.
    if bearer == Some(expected) || q.token.as_deref() == Some(expected) {
        next.run(req).await
    } else {
        ErrorBody::new(ErrorCode::Unauthorized, "missing or wrong token").into_response()
    }
}

fn map(pairs: impl IntoIterator<Item = (&'static str, serde_json::Value)>) -> serde_json::Map<String, serde_json::Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[allow(dead_code)]
    protocol: u32,
    config: Option<serde_json::Value>,
    overrides: Option<serde_json::Value>,
}

fn config_error(e: ayvu_core::config::ConfigError) -> ErrorBody {
    let field = e.field().map(str::to_string);
    ErrorBody::new(ErrorCode::InvalidConfig, e.to_string()).with_field(field.as_deref())
}

fn build_config(options: &GatewayOptions, req: CreateRequest) -> Result<SessionConfig, ErrorBody> {
    match (req.config, req.overrides, &options.base) {
        (Some(_), Some(_), _) => Err(ErrorBody::new(ErrorCode::BadRequest, "send either config or overrides, not both")),
        (Some(doc), None, _) => {
            let settings = SessionSettings::from_json_value(doc).map_err(config_error)?;
            SessionConfig::from_settings(settings, &options.base_dir).map_err(config_error)
        }
        (None, overrides, Some(base)) => {
            let Some(overrides) = overrides else {
                return Ok(base.clone());
            };
            let settings = base.settings.with_overrides(overrides).map_err(config_error)?;
            // Shared resources stay shared unless a path was overridden.
            let reload = ["lexicon", "policy", "templates"].iter().any(|k| settings_path(&settings, k) != settings_path(&base.settings, k));
            if reload {
                SessionConfig::from_settings(settings, &options.base_dir).map_err(config_error)
            } else {
                settings.validate().map_err(config_error)?;
                Ok(SessionConfig {
                    settings,
                    ..base.clone()
                })
            }
        }
        (None, _, None) => Err(ErrorBody::new(
            ErrorCode::InvalidConfig,
            "this server has no base config; send a full config document",
        )
        .with_field(Some("config"))),
    }
}

fn settings_path<'a>(s: &'a SessionSettings, key: &str) -> Option<&'a str> {
    match key {
        "lexicon" => s.lexicon.as_deref(),
        "policy" => s.policy.as_deref(),
        _ => s.templates.as_deref(),
    }
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ErrorBody> {
    let req: CreateRequest = parse_request(&body)?;
    let config = build_config(&state.0.options, req)?;
    let session = Session::create(config).map_err(|e| match e {
        ayvu_core::SessionError::Config(c) => config_error(c),
        other => ErrorBody::new(ErrorCode::Internal, other.to_string()),
    })?;
    let id = format!("s-{}", state.0.next_id.fetch_add(1, Ordering::Relaxed));
    state
        .0
        .sessions
        .lock()
        .expect("session map lock")
        .insert(id.clone(), SessionHandle::spawn(session));
    Ok(reply(StatusCode::CREATED, map([("session_id", id.into())])))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ErrorBody> {
    let removed = state.0.sessions.lock().expect("session map lock").remove(&id);
    match removed {
        Some(_) => Ok(reply(StatusCode::OK, map([("deleted", id.into())]))),
        None => Err(ErrorBody::new(ErrorCode::NotFound, format!("not-found: no session {id}"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventsRequest {
    #[allow(dead_code)]
    protocol: u32,
    events: Vec<InputEvent>,
}

async fn submit_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ErrorBody> {
    let handle = state.session(&id)?;
    let req: EventsRequest = parse_request(&body)?;
    let accepted = req.events.len();
    let outcomes = handle
        .ask(|reply| Command::Submit {
            events: req.events,
            reply,
        })
        .await??;
    let turns: Vec<serde_json::Value> = outcomes.iter().map(|o| o.turn_index.into()).collect();
    Ok(reply(StatusCode::ACCEPTED, map([("accepted", accepted.into()), ("turns", turns.into())])))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsentRequest {
    #[allow(dead_code)]
    protocol: u32,
    scope: String,
    change: ConsentChange,
}

async fn update_consent(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ErrorBody> {
    let handle = state.session(&id)?;
    let req: ConsentRequest = parse_request(&body)?;
    let ack = handle
        .ask(|reply| Command::Consent {
            scope: req.scope,
            change: req.change,
            reply,
        })
        .await??;
    Ok(envelope_reply(EnvelopeKind::ConsentAck, serde_json::to_value(&ack).expect("ack serializes")))
}

async fn metrics(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ErrorBody> {
    let body = state.session(&id)?.ask(|reply| Command::Metrics { reply }).await?;
    Ok(envelope_reply(EnvelopeKind::Metrics, body))
}

async fn snapshot(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ErrorBody> {
    let body = state.session(&id)?.ask(|reply| Command::Snapshot { reply }).await?;
    Ok(reply(StatusCode::OK, map([("state", body)])))
}

async fn scopes(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ErrorBody> {
    let scopes = state.session(&id)?.ask(|reply| Command::Scopes { reply }).await?;
    Ok(reply(StatusCode::OK, map([("scopes", scopes.into())])))
}

async fn trace(
    State(state): State<AppState>,
    Path((id, turn)): Path<(String, u32)>,
) -> Result<impl IntoResponse, ErrorBody> {
    let body = state
        .session(&id)?
        .ask(|reply| Command::Trace { turn_index: turn, reply })
        .await??;
    Ok(reply(StatusCode::OK, map([("trace", body)])))
}

#[derive(Deserialize)]
struct StreamQuery {
    protocol: Option<serde_json::Value>,
}

async fn stream(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ErrorBody> {
    // Query values arrive as strings.
    let protocol = q.protocol.map(|v| match v.as_str().and_then(|s| s.parse::<u64>().ok()) {
        Some(n) => serde_json::Value::from(n),
        None => v,
    });
    check_protocol(protocol.as_ref())?;
    let handle = state.session(&id)?;
    let (sink, rx) = mpsc::unbounded_channel();
    handle.ask(|reply| Command::Subscribe { sink, reply }).await?;
    Ok(ws.on_upgrade(move |socket| forward(socket, rx)))
}

async fn forward(mut socket: WebSocket, mut rx: mpsc::UnboundedReceiver<actor::Event>) {
    let mut seq = 0u64;
    loop {
        tokio::select! {
            event = rx.recv() => {
                let Some((kind, body)) = event else {
                    let _ = socket.send(Message::Close(None)).await;
                    break;
                };
                seq += 1;
                let text = WireEnvelope::new(kind, seq, body).encode();
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => {
                match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                    Some(Ok(_)) => {}
                }
            }
        }
    }
}
