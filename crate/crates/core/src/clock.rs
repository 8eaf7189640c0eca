//! Simulated logical clock. Nothing in the runtime reads wall-clock time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClockError {
    #[error("invalid argument: clock delta must be non-negative, got {0}")]
    NegativeDelta(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimulatedClock {
    now_ms: u64,
    /// Processing cost charged each time an agent handles a message.
    /// Agents absent from the table cost 0 ms.
    per_agent_cost_ms: BTreeMap<String, u64>,
}

impl SimulatedClock {
    pub fn new(per_agent_cost_ms: BTreeMap<String, u64>) -> Self {
        SimulatedClock {
            now_ms: 0,
            per_agent_cost_ms,
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn advance(&mut self, delta_ms: i64) -> Result<u64, ClockError> {
        if delta_ms < 0 {
            return Err(ClockError::NegativeDelta(delta_ms));
        }
        self.now_ms += delta_ms as u64;
        Ok(self.now_ms)
    }

    /// Moves the clock forward to `t_ms`; earlier targets leave it unchanged.
    pub fn advance_to(&mut self, t_ms: u64) -> u64 {
        self.now_ms = self.now_ms.max(t_ms);
        self.now_ms
    }

    pub fn cost_of(&self, agent: &str) -> u64 {
        self.per_agent_cost_ms.get(agent).copied().unwrap_or(0)
    }

    /// Charges `agent`'s processing cost and returns the new time.
    pub fn charge(&mut self, agent: &str) -> u64 {
        self.now_ms += self.cost_of(agent);
        self.now_ms
    }

    pub fn per_agent_cost_ms(&self) -> &BTreeMap<String, u64> {
        &self.per_agent_cost_ms
    }
}
