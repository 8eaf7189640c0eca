//! One task per session. Every request becomes a command on the session's
//! FIFO queue; stream subscribers receive envelopes in processing order.

use ayvu_core::evaluation::live_metrics;
use ayvu_core::governance::ConsentChange;
use ayvu_core::orchestrator::ConsentAck;
use ayvu_core::{InputEvent, Session, SessionError, TurnOutcome};
use tokio::sync::{mpsc, oneshot};

use crate::wire::{EnvelopeKind, ErrorBody, ErrorCode, TraceStepBody};

/// An unnumbered envelope; the stream connection assigns `seq`.
pub type Event = (EnvelopeKind, serde_json::Value);

pub enum Command {
    Submit {
        events: Vec<InputEvent>,
        reply: oneshot::Sender<Result<Vec<TurnOutcome>, ErrorBody>>,
    },
    Consent {
        scope: String,
        change: ConsentChange,
        reply: oneshot::Sender<Result<ConsentAck, ErrorBody>>,
    },
    Metrics {
        reply: oneshot::Sender<serde_json::Value>,
    },
    Snapshot {
        reply: oneshot::Sender<serde_json::Value>,
    },
    Trace {
        turn_index: u32,
        reply: oneshot::Sender<Result<serde_json::Value, ErrorBody>>,
    },
    Scopes {
        reply: oneshot::Sender<Vec<String>>,
    },
    Subscribe {
        sink: mpsc::UnboundedSender<Event>,
        reply: oneshot::Sender<()>,
    },
}

#[derive(Clone)]
pub struct SessionHandle {
    tx: mpsc::UnboundedSender<Command>,
}

impl SessionHandle {
    pub fn spawn(session: Session) -> SessionHandle {
        let (tx, rx) = mpsc::unbounded_channel();
        tokio::spawn(run(session, rx));
        SessionHandle { tx }
    }

    /// Enqueues a command built around a reply channel and awaits the
    /// reply.
    pub async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ErrorBody> {
        let (reply, rx) = oneshot::channel();
        let gone = || ErrorBody::new(ErrorCode::NotFound, "session closed");
        self.tx.send(make(reply)).map_err(|_| gone())?;
        rx.await.map_err(|_| gone())
    }
}

fn session_error(e: SessionError) -> ErrorBody {
    match e {
        SessionError::Endpoint(e) => ErrorBody::new(ErrorCode::StreamOrder, e.to_string()),
        SessionError::InvalidScope(e) => ErrorBody::new(ErrorCode::InvalidScope, e.to_string()).with_field(Some("scope")),
        SessionError::TurnNotFound(_) => ErrorBody::new(ErrorCode::NotFound, e.to_string()),
        SessionError::Config(c) => {
            let field = c.field().map(str::to_string);
            ErrorBody::new(ErrorCode::InvalidConfig, c.to_string()).with_field(field.as_deref())
        }
        other => ErrorBody::new(ErrorCode::Internal, other.to_string()),
    }
}

fn value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("domain types serialize")
}

struct Actor {
    session: Session,
    subscribers: Vec<mpsc::UnboundedSender<Event>>,
}

impl Actor {
    fn publish(&mut self, kind: EnvelopeKind, body: serde_json::Value) {
        self.subscribers.retain(|s| s.send((kind, body.clone())).is_ok());
    }

    fn publish_outcomes(&mut self, outcomes: &[TurnOutcome]) {
        for o in outcomes {
            for (i, step) in o.trace.steps().iter().enumerate() {
                let body = TraceStepBody {
                    correlation_id: o.correlation_id.clone(),
                    turn_index: o.turn_index,
                    step_index: i,
                    step: step.clone(),
                };
                self.publish(EnvelopeKind::TraceStep, value(&body));
            }
            self.publish(EnvelopeKind::TurnOutcome, value(o));
        }
        let metrics = value(&live_metrics(&self.session));
        self.publish(EnvelopeKind::Metrics, metrics);
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Submit { events, reply } => {
                let result = self.session.submit_events(&events).map_err(session_error);
                match &result {
                    Ok(outcomes) => self.publish_outcomes(outcomes),
                    Err(e) => self.publish(EnvelopeKind::Error, value(e)),
                }
                let _ = reply.send(result);
            }
            Command::Consent { scope, change, reply } => {
                let result = self.session.update_consent(&scope, change).map_err(session_error);
                if let Ok(ack) = &result {
                    self.publish(EnvelopeKind::ConsentAck, value(ack));
                }
                let _ = reply.send(result);
            }
            Command::Metrics { reply } => {
                let _ = reply.send(value(&live_metrics(&self.session)));
            }
            Command::Snapshot { reply } => {
                let _ = reply.send(self.session.state_snapshot());
            }
            Command::Trace { turn_index, reply } => {
                let _ = reply.send(self.session.get_trace(turn_index).map(|t| value(&t)).map_err(session_error));
            }
            Command::Scopes { reply } => {
                let mut scopes = vec!["store_audio".to_string(), "store_transcript".to_string()];
                let mut categories: Vec<String> =
                    self.session.registry().descriptors().map(|d| format!("category:{}", d.category)).collect();
                categories.sort();
                categories.dedup();
                scopes.extend(categories);
                let _ = reply.send(scopes);
            }
            Command::Subscribe { sink, reply } => {
                self.subscribers.push(sink);
                let _ = reply.send(());
            }
        }
    }
}

async fn run(session: Session, mut rx: mpsc::UnboundedReceiver<Command>) {
    let mut actor = Actor {
        session,
        subscribers: Vec::new(),
    };
    while let Some(cmd) = rx.recv().await {
        actor.handle(cmd);
    }
}
