//! Session runtime.
//!
//! One session owns every mutable piece of per-conversation state and runs
//! each completed turn through the fixed pipeline:
//!
//! ```text
//! endpoint -> understand -> resolve -> [gate -> act] -> plan -> gate -> deliver
//! ```
//!
//! Every step charges its agent's configured cost to the simulated clock.
//! A response is scheduled for the time its delivery step completes; a token
//! that starts before then cancels it. Whatever is still scheduled when a
//! batch of events ends is delivered at its scheduled time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{ActionError, ActionRegistry, ActionRequest, ActionResult, UNHANDLED_AGENT};
use crate::clock::SimulatedClock;
use crate::config::{ConfigError, SessionConfig};
use crate::dialogue::{DialogueState, RepairSignal, Resolution};
use crate::endpointing::{EndpointError, EndpointEvent, Endpointer};
use crate::governance::{
    ArtifactKind, ConsentChange, ConsentScope, DecisionContext, Gatekeeper, InvalidScope, PolicyDecision,
    RetentionDecision, Verdict,
};
use crate::model::{agent, AgentMessage, InputEvent, Intent, Payload, PayloadKind, PolicyQuery, Utterance};
use crate::response::{plan_response, render, Delivery, ResponseError, ResponseKind, ResponsePlan, ResponseTrigger, WITHHELD_MARKER};
use crate::trace::{TraceRecord, TraceStep};
use crate::understanding::{parse_intent, IntentFrame};

/// Category assigned to intents no agent claims.
pub const UNASSIGNED_CATEGORY: &str = "unassigned";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session-creation error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    InvalidScope(#[from] InvalidScope),
    #[error("not-found: no turn {0}")]
    TurnNotFound(u32),
    #[error("internal: {0}")]
    Internal(String),
}

impl From<ActionError> for SessionError {
    fn from(e: ActionError) -> Self {
        SessionError::Internal(e.to_string())
    }
}

impl From<ResponseError> for SessionError {
    fn from(e: ResponseError) -> Self {
        SessionError::Internal(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetentionRecord {
    pub artifact: ArtifactKind,
    pub decision: RetentionDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub turn_index: u32,
    pub correlation_id: String,
    pub utterance: String,
    pub frame: IntentFrame,
    pub resolution: Resolution,
    /// Action-gate verdict, when the turn reached the gate.
    pub action_verdict: Option<Verdict>,
    pub actions: Vec<ActionResult>,
    pub response_kind: ResponseKind,
    pub delivery: Delivery,
    /// What the user heard: the response text, the withheld marker, or
    /// nothing when cancelled.
    pub delivered_text: Option<String>,
    pub response_gap_ms: u64,
    pub completed_ms: u64,
    pub repair: RepairSignal,
    pub retention: Vec<RetentionRecord>,
    pub trace: TraceRecord,
}

impl TurnOutcome {
    pub fn executed(&self, intent: Intent) -> bool {
        self.actions.iter().any(|a| a.is_success() && a.intent == intent)
    }

    pub fn is_breakdown(&self) -> bool {
        self.frame.intent == Intent::Unknown || self.resolution.is_repair()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentAck {
    pub scope: ConsentScope,
    pub change: ConsentChange,
    pub effective_from_turn: u32,
    pub audit_seq: u64,
}

/// A planned response waiting for its delivery time.
struct Scheduled {
    outcome: TurnOutcome,
    plan: ResponsePlan,
    gate: PolicyDecision,
    text: String,
    deliver_at_ms: u64,
}

pub struct Session {
    config: SessionConfig,
    endpointer: Endpointer,
    clock: SimulatedClock,
    state: DialogueState,
    gatekeeper: Gatekeeper,
    registry: ActionRegistry,
    bus: Vec<AgentMessage>,
    outcomes: Vec<TurnOutcome>,
    scheduled: Option<Scheduled>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("turns", &self.outcomes.len())
            .field("clock_ms", &self.clock.now_ms())
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn create(config: SessionConfig) -> Result<Session, SessionError> {
        let fixtures = config.settings.fixtures.clone();
        let registry = ActionRegistry::with_builtins(fixtures.playlist, fixtures.tabs);
        Session::create_with_registry(config, registry)
    }

    /// Uses a caller-built registry instead of the built-in mocks.
    pub fn create_with_registry(config: SessionConfig, registry: ActionRegistry) -> Result<Session, SessionError> {
        config.settings.validate()?;
        let s = &config.settings;
        let endpointer = Endpointer::new(s.endpoint, s.speaker_id.clone())?;
        Ok(Session {
            clock: SimulatedClock::new(s.costs.clone()),
            state: DialogueState::new(s.max_repair_attempts),
            gatekeeper: Gatekeeper::new(config.policy.clone()),
            endpointer,
            registry,
            bus: Vec::new(),
            outcomes: Vec::new(),
            scheduled: None,
            config,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn dialogue_state(&self) -> &DialogueState {
        &self.state
    }

    pub fn gatekeeper(&self) -> &Gatekeeper {
        &self.gatekeeper
    }

    pub fn registry(&self) -> &ActionRegistry {
        &self.registry
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn next_turn_index(&self) -> u32 {
        self.endpointer.next_turn_index()
    }

    /// Every bus message so far, in send order.
    pub fn messages(&self) -> &[AgentMessage] {
        &self.bus
    }

    /// Completed turns, in order.
    pub fn outcomes(&self) -> &[TurnOutcome] {
        &self.outcomes
    }

    pub fn get_trace(&self, turn_index: u32) -> Result<TraceRecord, SessionError> {
        self.outcomes
            .iter()
            .find(|o| o.turn_index == turn_index)
            .map(|o| o.trace.clone())
            .ok_or(SessionError::TurnNotFound(turn_index))
    }

    pub fn state_snapshot(&self) -> serde_json::Value {
        let agents: BTreeMap<String, serde_json::Value> = self
            .registry
            .descriptors()
            .map(|d| d.name.clone())
            .collect::<Vec<_>>()
            .into_iter()
            .filter_map(|name| self.registry.agent_state(&name).map(|s| (name, s)))
            .collect();
        serde_json::json!({
            "clock_ms": self.clock.now_ms(),
            "next_turn_index": self.endpointer.next_turn_index(),
            "turns": self.outcomes.len(),
            "outcomes": self.outcomes,
            "dialogue": self.state,
            "consent": self.gatekeeper.consent(),
            "agents": agents,
            "retained": self.gatekeeper.retained(),
            "audit_entries": self.gatekeeper.audit().len(),
        })
    }

    pub fn update_consent(&mut self, scope: &str, change: ConsentChange) -> Result<ConsentAck, SessionError> {
        let scope: ConsentScope = scope.parse()?;
        let effective_from = self.endpointer.next_turn_index();
        let verb = match change {
            ConsentChange::Grant => "grant",
            ConsentChange::Revoke => "revoke",
        };
        self.send(
            &format!("consent-{}", self.gatekeeper.audit().len() + 1),
            agent::USER,
            agent::GOVERNANCE,
            Payload::PolicyQuery(PolicyQuery {
                subject: format!("consent {verb} {scope}"),
                turn_index: effective_from,
            }),
        );
        self.gatekeeper.update_consent(scope.clone(), change, effective_from);
        Ok(ConsentAck {
            scope,
            change,
            effective_from_turn: effective_from,
            audit_seq: self.gatekeeper.audit().len() as u64,
        })
    }

    /// Feeds a batch of events. The batch is validated up front; on error
    /// nothing is applied.
    pub fn submit_events(&mut self, events: &[InputEvent]) -> Result<Vec<TurnOutcome>, SessionError> {
        let mut probe = self.endpointer.clone();
        for e in events {
            probe.ingest(e)?;
        }
        let first_new = self.outcomes.len();
        for event in events {
            let produced = self.endpointer.ingest(event).expect("validated above");
            for ev in produced {
                if let EndpointEvent::TurnCompleted { utterance, .. } = ev {
                    self.flush_scheduled();
                    self.run_turn(utterance)?;
                }
            }
            match event {
                InputEvent::Token(token) => match &self.scheduled {
                    Some(s) if token.start_ms < s.deliver_at_ms => self.cancel_scheduled(token.start_ms),
                    Some(_) => self.flush_scheduled(),
                    None => {}
                },
                InputEvent::Silence { .. } => {
                    if self
                        .scheduled
                        .as_ref()
                        .is_some_and(|s| s.deliver_at_ms <= self.endpointer.stream_ms())
                    {
                        self.flush_scheduled();
                    }
                }
            }
        }
        self.flush_scheduled();
        Ok(self.outcomes[first_new..].to_vec())
    }

    fn send(&mut self, correlation_id: &str, from: &str, to: &str, payload: Payload) {
        let message_id = format!("m{}", self.bus.len() + 1);
        self.bus.push(AgentMessage {
            message_id,
            correlation_id: correlation_id.to_string(),
            source_agent: from.to_string(),
            destination_agent: to.to_string(),
            payload,
            logical_time_ms: self.clock.now_ms(),
        });
    }

    fn step(
        &mut self,
        trace: &mut TraceRecord,
        agent: &str,
        kind_in: Option<PayloadKind>,
        kind_out: PayloadKind,
        summary: String,
        verdict: Option<Verdict>,
    ) -> Result<u64, SessionError> {
        let t = self.clock.charge(agent);
        trace
            .append_step(TraceStep {
                agent: agent.to_string(),
                kind_in,
                kind_out,
                summary,
                logical_time_ms: t,
                verdict,
            })
            .map_err(|e| SessionError::Internal(e.to_string()))?;
        Ok(t)
    }

    fn run_turn(&mut self, utterance: Utterance) -> Result<(), SessionError> {
        let turn = utterance.turn_index;
        let cid = format!("turn-{turn}");
        let start = self.clock.advance_to(utterance.completed_ms);
        let mut trace = TraceRecord::new(cid.clone(), turn);
        let text = utterance.text();

        // speech interface, including retention of the turn's artifacts
        let at_ms = start + self.clock.cost_of(agent::SPEECH);
        let ctx = DecisionContext {
            correlation_id: &cid,
            turn_index: turn,
            at_ms,
        };
        let audio = self.gatekeeper.retain(ArtifactKind::Audio, &format!("audio:{cid}"), &ctx);
        let transcript = self.gatekeeper.retain(ArtifactKind::Transcript, &text, &ctx);
        let retention = vec![
            RetentionRecord { artifact: ArtifactKind::Audio, decision: audio },
            RetentionRecord { artifact: ArtifactKind::Transcript, decision: transcript },
        ];
        let fmt_ret = |d: RetentionDecision| match d {
            RetentionDecision::Discard => "discard",
            RetentionDecision::KeepSession => "keep_session",
            RetentionDecision::KeepPersistent => "keep_persistent",
        };
        self.step(
            &mut trace,
            agent::SPEECH,
            None,
            PayloadKind::Utterance,
            format!(
                "turn completed at {} ms: \"{text}\" ({} tokens); audio {}, transcript {}",
                utterance.completed_ms,
                utterance.tokens.len(),
                fmt_ret(audio),
                fmt_ret(transcript)
            ),
            None,
        )?;
        self.send(&cid, agent::SPEECH, agent::UNDERSTANDING, Payload::Utterance(utterance.clone()));

        let frame = parse_intent(&utterance, &self.config.lexicon);
        self.step(
            &mut trace,
            agent::UNDERSTANDING,
            Some(PayloadKind::Utterance),
            PayloadKind::IntentFrame,
            frame.summary(),
            None,
        )?;
        self.send(&cid, agent::UNDERSTANDING, agent::CONVERSATION_STATE, Payload::IntentFrame(frame.clone()));

        let resolution = self.state.resolve(&frame);
        self.step(
            &mut trace,
            agent::CONVERSATION_STATE,
            Some(PayloadKind::IntentFrame),
            PayloadKind::ResolvedIntent,
            resolution.summary(),
            None,
        )?;
        let next = if resolution.is_repair() { agent::RESPONSE } else { agent::GOVERNANCE };
        self.send(&cid, agent::CONVERSATION_STATE, next, Payload::ResolvedIntent(resolution.clone()));

        let mut actions = Vec::new();
        let mut action_verdict = None;
        let mut gate_decision: Option<(PolicyDecision, Intent, String)> = None;
        if let Resolution::Resolved(r) = &resolution {
            if r.intent != Intent::Confirmation {
                let (category, target_agent) = match self.registry.route(r.intent) {
                    Some(d) => (d.category.clone(), d.name.clone()),
                    None => (UNASSIGNED_CATEGORY.to_string(), UNHANDLED_AGENT.to_string()),
                };
                let at_ms = self.clock.now_ms() + self.clock.cost_of(agent::GOVERNANCE);
                let ctx = DecisionContext {
                    correlation_id: &cid,
                    turn_index: turn,
                    at_ms,
                };
                let decision = self.gatekeeper.gate_action(r.intent, &category, &ctx);
                action_verdict = Some(decision.verdict);
                let summary = format!("{} (rule {}): {}", decision.verdict, decision.rule_id, decision.rationale);
                if decision.verdict == Verdict::Allow {
                    self.step(
                        &mut trace,
                        agent::GOVERNANCE,
                        Some(PayloadKind::ResolvedIntent),
                        PayloadKind::ActionRequest,
                        summary,
                        Some(Verdict::Allow),
                    )?;
                    let request = ActionRequest {
                        correlation_id: cid.clone(),
                        intent: r.intent,
                        category: category.clone(),
                        slots: r.slots.clone(),
                        target: r.target.clone(),
                    };
                    self.send(&cid, agent::GOVERNANCE, &target_agent, Payload::ActionRequest(request.clone()));
                    let result = self.registry.dispatch(&request, &decision)?;
                    self.step(
                        &mut trace,
                        &result.agent.clone(),
                        Some(PayloadKind::ActionRequest),
                        PayloadKind::ActionResult,
                        result.summary(),
                        None,
                    )?;
                    self.send(&cid, &result.agent.clone(), agent::RESPONSE, Payload::ActionResult(result.clone()));
                    actions.push(result);
                } else {
                    self.step(
                        &mut trace,
                        agent::GOVERNANCE,
                        Some(PayloadKind::ResolvedIntent),
                        PayloadKind::PolicyDecision,
                        summary,
                        Some(decision.verdict),
                    )?;
                    self.send(&cid, agent::GOVERNANCE, agent::RESPONSE, Payload::PolicyDecision(decision.clone()));
                    gate_decision = Some((decision, r.intent, category));
                }
            }
        }

        let repair = self.state.commit_turn(&resolution, actions.first());

        let (trigger, kind_in) = match (&resolution, actions.first(), &gate_decision) {
            (_, Some(result), _) => (ResponseTrigger::Action(result), PayloadKind::ActionResult),
            (_, None, Some((decision, intent, category))) => (
                ResponseTrigger::Decision {
                    decision,
                    intent: *intent,
                    category,
                },
                PayloadKind::PolicyDecision,
            ),
            (Resolution::Repair(req), None, None) => (ResponseTrigger::Repair(req), PayloadKind::ResolvedIntent),
            (Resolution::Resolved(r), None, None) => (ResponseTrigger::Acknowledge(r), PayloadKind::ResolvedIntent),
        };
        let plan = plan_response(&self.state, trigger, &self.config.templates);
        let mut plan_summary = plan.summary();
        if let RepairSignal::Escalated { attempts } = repair {
            plan_summary.push_str(&format!("; repair escalated after {attempts} attempts"));
        }
        self.step(&mut trace, agent::RESPONSE, Some(kind_in), PayloadKind::ResponsePlan, plan_summary, None)?;
        self.send(&cid, agent::RESPONSE, agent::GOVERNANCE, Payload::ResponsePlan(plan.clone()));

        let at_ms = self.clock.now_ms() + self.clock.cost_of(agent::GOVERNANCE);
        let ctx = DecisionContext {
            correlation_id: &cid,
            turn_index: turn,
            at_ms,
        };
        let gate = self.gatekeeper.gate_response(plan.kind, &plan.template_id, &ctx);
        self.step(
            &mut trace,
            agent::GOVERNANCE,
            Some(PayloadKind::ResponsePlan),
            PayloadKind::PolicyDecision,
            format!("{} (rule {}): {}", gate.verdict, gate.rule_id, gate.rationale),
            Some(gate.verdict),
        )?;
        self.send(&cid, agent::GOVERNANCE, agent::RESPONSE, Payload::PolicyDecision(gate.clone()));

        let text = if gate.verdict == Verdict::Allow {
            render(&plan, &self.config.templates)?
        } else {
            WITHHELD_MARKER.to_string()
        };
        let deliver_at_ms = self.clock.charge(agent::RESPONSE);
        let outcome = TurnOutcome {
            turn_index: turn,
            correlation_id: cid,
            utterance: utterance.text(),
            frame,
            resolution,
            action_verdict,
            actions,
            response_kind: plan.kind,
            delivery: Delivery::Cancelled {
                text: String::new(),
                template_id: String::new(),
                by_token_at_ms: 0,
            },
            delivered_text: None,
            response_gap_ms: deliver_at_ms - start,
            completed_ms: utterance.completed_ms,
            repair,
            retention,
            trace,
        };
        self.scheduled = Some(Scheduled {
            outcome,
            plan,
            gate,
            text,
            deliver_at_ms,
        });
        Ok(())
    }

    fn finish(&mut self, s: Scheduled, delivery: Delivery, at_ms: u64) {
        let mut outcome = s.outcome;
        outcome.delivered_text = delivery.delivered_text().map(str::to_string);
        outcome
            .trace
            .append_step(TraceStep {
                agent: agent::RESPONSE.to_string(),
                kind_in: Some(PayloadKind::PolicyDecision),
                kind_out: PayloadKind::ResponseDelivery,
                summary: delivery.summary(),
                logical_time_ms: at_ms,
                verdict: None,
            })
            .expect("delivery follows the response gate");
        outcome.delivery = delivery.clone();
        let message_id = format!("m{}", self.bus.len() + 1);
        self.bus.push(AgentMessage {
            message_id,
            correlation_id: outcome.correlation_id.clone(),
            source_agent: agent::RESPONSE.to_string(),
            destination_agent: agent::USER.to_string(),
            payload: Payload::ResponseDelivery(delivery),
            logical_time_ms: at_ms,
        });
        self.outcomes.push(outcome);
    }

    fn flush_scheduled(&mut self) {
        if let Some(s) = self.scheduled.take() {
            let delivery = if s.gate.verdict == Verdict::Allow {
                Delivery::Spoken {
                    text: s.text.clone(),
                    template_id: s.plan.template_id.clone(),
                }
            } else {
                Delivery::Withheld {
                    marker: s.text.clone(),
                    template_id: s.plan.template_id.clone(),
                    rule_id: s.gate.rule_id.clone(),
                }
            };
            let at = s.deliver_at_ms;
            self.finish(s, delivery, at);
        }
    }

    fn cancel_scheduled(&mut self, token_start_ms: u64) {
        if let Some(s) = self.scheduled.take() {
            let last = s.outcome.trace.steps().last().map_or(0, |st| st.logical_time_ms);
            let delivery = Delivery::Cancelled {
                text: s.text.clone(),
                template_id: s.plan.template_id.clone(),
                by_token_at_ms: token_start_ms,
            };
            self.finish(s, delivery, token_start_ms.max(last));
        }
    }
}
