//! Deterministic, explainable multi-agent dialogue runtime for oral-first
//! Guaraní / Jopará interaction.
//!
//! A session wires six agents over a per-session FIFO bus:
//!
//! ```text
//! speech (endpointing) -> understanding -> conversation_state
//!     -> governance (action gate) -> action agent -> response
//!     -> governance (response gate) -> delivery
//! ```
//!
//! Every hop is recorded in a [`trace::TraceRecord`], and the simulated
//! [`clock::SimulatedClock`] makes every run byte-for-byte reproducible.

pub mod actions;
pub mod canonical;
pub mod clock;
pub mod config;
pub mod dialogue;
pub mod endpointing;
pub mod evaluation;
pub mod governance;
pub mod model;
pub mod orchestrator;
pub mod response;
pub mod textfmt;
pub mod trace;
pub mod understanding;

pub use config::{SessionConfig, SessionSettings};
pub use model::{AgentMessage, InputEvent, LanguageTag, Payload, PayloadKind, TimedToken, Utterance};
pub use orchestrator::{Session, SessionError, TurnOutcome};
