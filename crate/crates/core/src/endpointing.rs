//! Speech interface agent: turn segmentation from token timing.
//!
//! Silence after a token is classified against three thresholds. Gaps
//! below `puso_gap_ms` (intra-word glottal stops) and hesitations keep
//! the floor; only a gap reaching `end_of_turn_gap_ms` closes the turn.
//! Class boundaries are half-open: a gap equal to a threshold belongs to
//! the later class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{InputEvent, ModelError, TimedToken, Utterance};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndpointError {
    #[error("stream-order violation: token {surface:?} starts at {start_ms} ms but the stream is already at {stream_ms} ms")]
    StreamOrder {
        surface: String,
        start_ms: u64,
        stream_ms: u64,
    },
    #[error("invalid token: {0}")]
    InvalidToken(#[from] ModelError),
    #[error("invalid endpoint config: thresholds must satisfy 0 < puso ({puso}) < hold_floor ({hold}) < end_of_turn ({end})")]
    InvalidConfig { puso: u64, hold: u64, end: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub puso_gap_ms: u64,
    pub hold_floor_gap_ms: u64,
    pub end_of_turn_gap_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            puso_gap_ms: 250,
            hold_floor_gap_ms: 600,
            end_of_turn_gap_ms: 1200,
        }
    }
}

impl EndpointConfig {
    pub fn new(puso: u64, hold: u64, end: u64) -> Result<Self, EndpointError> {
        let config = EndpointConfig {
            puso_gap_ms: puso,
            hold_floor_gap_ms: hold,
            end_of_turn_gap_ms: end,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EndpointError> {
        if 0 < self.puso_gap_ms
            && self.puso_gap_ms < self.hold_floor_gap_ms
            && self.hold_floor_gap_ms < self.end_of_turn_gap_ms
        {
            Ok(())
        } else {
            Err(EndpointError::InvalidConfig {
                puso: self.puso_gap_ms,
                hold: self.hold_floor_gap_ms,
                end: self.end_of_turn_gap_ms,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapClass {
    IntraWord,
    Hesitation,
    TurnEnd,
}

pub fn classify_gap(gap_ms: u64, config: &EndpointConfig) -> GapClass {
    if gap_ms >= config.end_of_turn_gap_ms {
        GapClass::TurnEnd
    } else if gap_ms >= config.puso_gap_ms {
        GapClass::Hesitation
    } else {
        GapClass::IntraWord
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointEvent {
    UtteranceStarted {
        at_ms: u64,
        turn_index: u32,
    },
    /// Silence inside an open turn crossed into the hesitation class
    /// (`sustained == false`) or reached `hold_floor_gap_ms`
    /// (`sustained == true`). The turn stays open either way.
    FloorHeld {
        at_ms: u64,
        gap_ms: u64,
        sustained: bool,
    },
    TurnCompleted {
        at_ms: u64,
        utterance: Utterance,
    },
}

impl EndpointEvent {
    pub fn at_ms(&self) -> u64 {
        match self {
            EndpointEvent::UtteranceStarted { at_ms, .. }
            | EndpointEvent::FloorHeld { at_ms, .. }
            | EndpointEvent::TurnCompleted { at_ms, .. } => *at_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct OpenTurn {
    tokens: Vec<TimedToken>,
    started_ms: u64,
    hesitation_signalled: bool,
    sustained_signalled: bool,
}

/// Endpointer state for one session's input stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpointer {
    config: EndpointConfig,
    speaker_id: String,
    stream_ms: u64,
    open: Option<OpenTurn>,
    next_turn_index: u32,
}

impl Endpointer {
    pub fn new(config: EndpointConfig, speaker_id: impl Into<String>) -> Result<Self, EndpointError> {
        config.validate()?;
        Ok(Endpointer {
            config,
            speaker_id: speaker_id.into(),
            stream_ms: 0,
            open: None,
            next_turn_index: 1,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn stream_ms(&self) -> u64 {
        self.stream_ms
    }

    pub fn has_open_turn(&self) -> bool {
        self.open.is_some()
    }

    /// Index the next completed utterance will carry.
    pub fn next_turn_index(&self) -> u32 {
        self.next_turn_index
    }

    /// Checks that `event` could be ingested without mutating anything.
    pub fn check(&self, event: &InputEvent) -> Result<(), EndpointError> {
        if let InputEvent::Token(token) = event {
            token.validate()?;
            if token.start_ms < self.stream_ms {
                return Err(EndpointError::StreamOrder {
                    surface: token.surface.clone(),
                    start_ms: token.start_ms,
                    stream_ms: self.stream_ms,
                });
            }
        }
        Ok(())
    }

    /// Position of the stream after `event`, assuming it is valid.
    pub fn stream_after(&self, stream_ms: u64, event: &InputEvent) -> u64 {
        match event {
            InputEvent::Token(t) => t.end_ms,
            InputEvent::Silence { ms } => stream_ms + ms,
        }
    }

    pub fn ingest(&mut self, event: &InputEvent) -> Result<Vec<EndpointEvent>, EndpointError> {
        self.check(event)?;
        let mut out = Vec::new();
        match event {
            InputEvent::Token(token) => {
                self.advance_silence_to(token.start_ms, &mut out);
                let turn_index = self.next_turn_index;
                let open = self.open.get_or_insert_with(|| {
                    out.push(EndpointEvent::UtteranceStarted {
                        at_ms: token.start_ms,
                        turn_index,
                    });
                    OpenTurn {
                        tokens: Vec::new(),
                        started_ms: token.start_ms,
                        hesitation_signalled: false,
                        sustained_signalled: false,
                    }
                });
                open.tokens.push(token.clone());
                open.hesitation_signalled = false;
                open.sustained_signalled = false;
                self.stream_ms = token.end_ms;
            }
            InputEvent::Silence { ms } => {
                let target = self.stream_ms + ms;
                self.advance_silence_to(target, &mut out);
            }
        }
        Ok(out)
    }

    fn advance_silence_to(&mut self, target_ms: u64, out: &mut Vec<EndpointEvent>) {
        let config = self.config;
        if let Some(open) = self.open.as_mut() {
            let last_end = open.tokens.last().map(|t| t.end_ms).unwrap_or(open.started_ms);
            let gap = target_ms.saturating_sub(last_end);
            if gap >= config.puso_gap_ms && !open.hesitation_signalled {
                open.hesitation_signalled = true;
                out.push(EndpointEvent::FloorHeld {
                    at_ms: last_end + config.puso_gap_ms,
                    gap_ms: config.puso_gap_ms,
                    sustained: false,
                });
            }
            if gap >= config.hold_floor_gap_ms && !open.sustained_signalled {
                open.sustained_signalled = true;
                out.push(EndpointEvent::FloorHeld {
                    at_ms: last_end + config.hold_floor_gap_ms,
                    gap_ms: config.hold_floor_gap_ms,
                    sustained: true,
                });
            }
            if gap >= config.end_of_turn_gap_ms {
                let open = self.open.take().expect("checked above");
                let completed_ms = last_end + config.end_of_turn_gap_ms;
                let utterance = Utterance {
                    tokens: open.tokens,
                    speaker_id: self.speaker_id.clone(),
                    turn_index: self.next_turn_index,
                    started_ms: open.started_ms,
                    completed_ms,
                };
                self.next_turn_index += 1;
                out.push(EndpointEvent::TurnCompleted {
                    at_ms: completed_ms,
                    utterance,
                });
            }
        }
        self.stream_ms = self.stream_ms.max(target_ms);
    }
}

/// Batch segmentation: feeds `tokens` and then `trailing_silence_ms`
/// through a fresh [`Endpointer`] and returns the completed utterances.
/// A final turn not closed by the trailing silence is not returned.
pub fn segment_stream(
    tokens: &[TimedToken],
    trailing_silence_ms: u64,
    config: &EndpointConfig,
) -> Result<Vec<Utterance>, EndpointError> {
    let mut endpointer = Endpointer::new(*config, "user")?;
    let mut utterances = Vec::new();
    let events = tokens
        .iter()
        .cloned()
        .map(InputEvent::Token)
        .chain(std::iter::once(InputEvent::Silence {
            ms: trailing_silence_ms,
        }));
    for event in events {
        for emitted in endpointer.ingest(&event)? {
            if let EndpointEvent::TurnCompleted { utterance, .. } = emitted {
                utterances.push(utterance);
            }
        }
    }
    Ok(utterances)
}
