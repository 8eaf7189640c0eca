//! Shared domain types and the agent message envelope.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{ActionRequest, ActionResult};
use crate::dialogue::Resolution;
use crate::governance::PolicyDecision;
use crate::response::{Delivery, ResponsePlan};
use crate::understanding::{normalize, IntentFrame};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("token {surface:?}: end_ms {end_ms} must be greater than start_ms {start_ms}")]
    EmptyInterval {
        surface: String,
        start_ms: u64,
        end_ms: u64,
    },
    #[error("token surface {0:?} is empty after normalization")]
    EmptySurface(String),
    #[error("unknown language tag {0:?} (expected gn, es, mixed or unknown)")]
    UnknownLanguageTag(String),
    #[error("unknown intent {0:?}")]
    UnknownIntent(String),
}

/// Language of a single token. `Mixed` covers Jopará forms that blend both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LanguageTag {
    Gn,
    Es,
    Mixed,
    #[default]
    Unknown,
}

impl LanguageTag {
    pub fn as_str(self) -> &'static str {
        match self {
            LanguageTag::Gn => "gn",
            LanguageTag::Es => "es",
            LanguageTag::Mixed => "mixed",
            LanguageTag::Unknown => "unknown",
        }
    }
}

impl FromStr for LanguageTag {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gn" => Ok(LanguageTag::Gn),
            "es" => Ok(LanguageTag::Es),
            "mixed" => Ok(LanguageTag::Mixed),
            "unknown" => Ok(LanguageTag::Unknown),
            other => Err(ModelError::UnknownLanguageTag(other.to_string())),
        }
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One recognized word with its timing, as produced by the (simulated)
/// recognizer in front of the speech interface agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedToken {
    pub surface: String,
    pub start_ms: u64,
    pub end_ms: u64,
    #[serde(default)]
    pub language_tag: LanguageTag,
}

impl TimedToken {
    pub fn new(
        surface: impl Into<String>,
        start_ms: u64,
        end_ms: u64,
        language_tag: LanguageTag,
    ) -> Result<Self, ModelError> {
        let token = TimedToken {
            surface: surface.into(),
            start_ms,
            end_ms,
            language_tag,
        };
        token.validate()?;
        Ok(token)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.end_ms <= self.start_ms {
            return Err(ModelError::EmptyInterval {
                surface: self.surface.clone(),
                start_ms: self.start_ms,
                end_ms: self.end_ms,
            });
        }
        if normalize(&self.surface).is_empty() {
            return Err(ModelError::EmptySurface(self.surface.clone()));
        }
        Ok(())
    }
}

/// A completed user turn: every token between turn open and turn close.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub tokens: Vec<TimedToken>,
    pub speaker_id: String,
    pub turn_index: u32,
    pub started_ms: u64,
    pub completed_ms: u64,
}

impl Utterance {
    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn last_token_end_ms(&self) -> u64 {
        self.tokens.last().map(|t| t.end_ms).unwrap_or(self.started_ms)
    }
}

/// Input to the speech interface agent: a recognized token, or silence
/// advancing the stream clock by `ms`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputEvent {
    Token(TimedToken),
    Silence { ms: u64 },
}

impl InputEvent {
    pub fn token(surface: &str, start_ms: u64, end_ms: u64) -> Self {
        InputEvent::Token(TimedToken {
            surface: surface.to_string(),
            start_ms,
            end_ms,
            language_tag: LanguageTag::Unknown,
        })
    }

    pub fn silence(ms: u64) -> Self {
        InputEvent::Silence { ms }
    }
}

/// The closed intent inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Intent {
    PlayMusic,
    OpenTab,
    Skip,
    StopMusic,
    CloseTab,
    Rejection,
    Confirmation,
    Unknown,
}

impl Intent {
    pub const ALL: [Intent; 8] = [
        Intent::PlayMusic,
        Intent::OpenTab,
        Intent::Skip,
        Intent::StopMusic,
        Intent::CloseTab,
        Intent::Rejection,
        Intent::Confirmation,
        Intent::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::PlayMusic => "PLAY_MUSIC",
            Intent::OpenTab => "OPEN_TAB",
            Intent::Skip => "SKIP",
            Intent::StopMusic => "STOP_MUSIC",
            Intent::CloseTab => "CLOSE_TAB",
            Intent::Rejection => "REJECTION",
            Intent::Confirmation => "CONFIRMATION",
            Intent::Unknown => "UNKNOWN",
        }
    }
}

impl FromStr for Intent {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Intent::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| ModelError::UnknownIntent(s.to_string()))
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Well-known agent names. Action agents register under their own names.
pub mod agent {
    pub const SPEECH: &str = "speech";
    pub const UNDERSTANDING: &str = "understanding";
    pub const CONVERSATION_STATE: &str = "conversation_state";
    pub const GOVERNANCE: &str = "governance";
    pub const RESPONSE: &str = "response";
    pub const MEDIA: &str = "media";
    pub const BROWSER: &str = "browser";
    /// Destination of delivered responses.
    pub const USER: &str = "user";

    pub const BUILT_IN: [&str; 7] = [
        SPEECH,
        UNDERSTANDING,
        CONVERSATION_STATE,
        GOVERNANCE,
        RESPONSE,
        MEDIA,
        BROWSER,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Utterance,
    IntentFrame,
    ResolvedIntent,
    PolicyQuery,
    PolicyDecision,
    ActionRequest,
    ActionResult,
    ResponsePlan,
    ResponseDelivery,
}

impl PayloadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PayloadKind::Utterance => "utterance",
            PayloadKind::IntentFrame => "intent_frame",
            PayloadKind::ResolvedIntent => "resolved_intent",
            PayloadKind::PolicyQuery => "policy_query",
            PayloadKind::PolicyDecision => "policy_decision",
            PayloadKind::ActionRequest => "action_request",
            PayloadKind::ActionResult => "action_result",
            PayloadKind::ResponsePlan => "response_plan",
            PayloadKind::ResponseDelivery => "response_delivery",
        }
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Query for a retention or action decision, carried on the bus when an
/// agent asks governance outside the main action gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyQuery {
    pub subject: String,
    pub turn_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Payload {
    Utterance(Utterance),
    IntentFrame(IntentFrame),
    ResolvedIntent(Resolution),
    PolicyQuery(PolicyQuery),
    PolicyDecision(PolicyDecision),
    ActionRequest(ActionRequest),
    ActionResult(ActionResult),
    ResponsePlan(ResponsePlan),
    ResponseDelivery(Delivery),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Utterance(_) => PayloadKind::Utterance,
            Payload::IntentFrame(_) => PayloadKind::IntentFrame,
            Payload::ResolvedIntent(_) => PayloadKind::ResolvedIntent,
            Payload::PolicyQuery(_) => PayloadKind::PolicyQuery,
            Payload::PolicyDecision(_) => PayloadKind::PolicyDecision,
            Payload::ActionRequest(_) => PayloadKind::ActionRequest,
            Payload::ActionResult(_) => PayloadKind::ActionResult,
            Payload::ResponsePlan(_) => PayloadKind::ResponsePlan,
            Payload::ResponseDelivery(_) => PayloadKind::ResponseDelivery,
        }
    }
}

/// One hop on the session bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub message_id: String,
    pub correlation_id: String,
    pub source_agent: String,
    pub destination_agent: String,
    pub payload: Payload,
    pub logical_time_ms: u64,
}

impl AgentMessage {
    pub fn payload_kind(&self) -> PayloadKind {
        self.payload.kind()
    }
}
