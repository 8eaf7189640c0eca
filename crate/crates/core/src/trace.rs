//! Append-only per-turn trace of every agent hop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::governance::Verdict;
use crate::model::{agent, PayloadKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace-order violation: step at {got} ms follows step at {last} ms")]
    OrderViolation { last: u64, got: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub agent: String,
    pub kind_in: Option<PayloadKind>,
    pub kind_out: PayloadKind,
    pub summary: String,
    pub logical_time_ms: u64,
    /// Present on governance steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    correlation_id: String,
    turn_index: u32,
    steps: Vec<TraceStep>,
}

impl TraceRecord {
    pub fn new(correlation_id: impl Into<String>, turn_index: u32) -> Self {
        TraceRecord {
            correlation_id: correlation_id.into(),
            turn_index,
            steps: Vec::new(),
        }
    }

    pub fn correlation_id(&self) -> &str {
        &self.correlation_id
    }

    pub fn turn_index(&self) -> u32 {
        self.turn_index
    }

    pub fn steps(&self) -> &[TraceStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Equal timestamps are legal; ties keep emission order.
    pub fn append_step(&mut self, step: TraceStep) -> Result<(), TraceError> {
        if let Some(last) = self.steps.last() {
            if step.logical_time_ms < last.logical_time_ms {
                return Err(TraceError::OrderViolation {
                    last: last.logical_time_ms,
                    got: step.logical_time_ms,
                });
            }
        }
        self.steps.push(step);
        Ok(())
    }

    /// Pipeline stage of each step, in order.
    pub fn stages(&self) -> Vec<Stage> {
        self.steps.iter().map(Stage::of).collect()
    }
}

/// Pipeline stage a trace step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Endpoint,
    Understand,
    Resolve,
    ActionGate(Verdict),
    Act,
    Plan,
    ResponseGate(Verdict),
    Deliver,
    Other,
}

impl Stage {
    pub fn of(step: &TraceStep) -> Stage {
        match (step.agent.as_str(), step.kind_in, step.kind_out) {
            (agent::SPEECH, _, PayloadKind::Utterance) => Stage::Endpoint,
            (agent::UNDERSTANDING, _, PayloadKind::IntentFrame) => Stage::Understand,
            (agent::CONVERSATION_STATE, _, PayloadKind::ResolvedIntent) => Stage::Resolve,
            (agent::GOVERNANCE, Some(PayloadKind::ResponsePlan), _) => {
                Stage::ResponseGate(step.verdict.unwrap_or(Verdict::Deny))
            }
            (agent::GOVERNANCE, _, _) => Stage::ActionGate(step.verdict.unwrap_or(Verdict::Deny)),
            (agent::RESPONSE, _, PayloadKind::ResponsePlan) => Stage::Plan,
            (agent::RESPONSE, _, PayloadKind::ResponseDelivery) => Stage::Deliver,
            (_, Some(PayloadKind::ActionRequest), PayloadKind::ActionResult) => Stage::Act,
            _ => Stage::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineViolation {
    #[error("step {index}: expected {expected}, found {found:?}")]
    Unexpected {
        index: usize,
        expected: &'static str,
        found: Stage,
    },
    #[error("trace ended early; expected {expected}")]
    Truncated { expected: &'static str },
    #[error("step {index}: action executed without a preceding allow")]
    UngatedAction { index: usize },
    #[error("step {index}: response delivered without a preceding response allow")]
    UngatedDelivery { index: usize },
}

/// Checks the pipeline grammar
/// `endpoint understand resolve (gate[allow] act)* gate[deny|ask]? plan gate deliver`
/// and the two gate-soundness rules.
pub fn verify_pipeline(trace: &TraceRecord) -> Result<(), PipelineViolation> {
    let stages = trace.stages();
    let mut i = 0;
    let expect = |i: &mut usize, expected: &'static str, ok: &dyn Fn(Stage) -> bool| {
        match stages.get(*i) {
            Some(&s) if ok(s) => {
                *i += 1;
                Ok(s)
            }
            Some(&s) => Err(PipelineViolation::Unexpected {
                index: *i,
                expected,
                found: s,
            }),
            None => Err(PipelineViolation::Truncated { expected }),
        }
    };
    expect(&mut i, "endpoint", &|s| s == Stage::Endpoint)?;
    expect(&mut i, "understand", &|s| s == Stage::Understand)?;
    expect(&mut i, "resolve", &|s| s == Stage::Resolve)?;
    loop {
        match stages.get(i) {
            Some(Stage::ActionGate(Verdict::Allow)) => {
                i += 1;
                expect(&mut i, "act", &|s| s == Stage::Act)?;
            }
            Some(Stage::ActionGate(_)) => {
                i += 1;
                break;
            }
            Some(Stage::Act) => return Err(PipelineViolation::UngatedAction { index: i }),
            _ => break,
        }
    }
    expect(&mut i, "plan", &|s| s == Stage::Plan)?;
    let gate = expect(&mut i, "response gate", &|s| matches!(s, Stage::ResponseGate(_)))?;
    expect(&mut i, "deliver", &|s| s == Stage::Deliver)?;
    let deliver = &trace.steps()[i - 1];
    if gate != Stage::ResponseGate(Verdict::Allow) && deliver.summary.starts_with("delivered") {
        return Err(PipelineViolation::UngatedDelivery { index: i - 1 });
    }
    if let Some(&s) = stages.get(i) {
        return Err(PipelineViolation::Unexpected {
            index: i,
            expected: "end of trace",
            found: s,
        });
    }
    Ok(())
}
