//! Conversation state agent: turn history, the focus stack, and reference
//! resolution.
//!
//! Salience is recency of mention. Entities mentioned in the same turn are
//! ordered by when they were inserted or refreshed, latest first. The stack
//! holds at most [`FOCUS_CAPACITY`] entities; the least salient is evicted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::actions::{ActionResult, ActionStatus, EntitySeed};
use crate::model::Intent;
use crate::understanding::IntentFrame;

pub const FOCUS_CAPACITY: usize = 16;
pub const DEFAULT_MAX_REPAIR_ATTEMPTS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Song,
    Playlist,
    Tab,
    VolumeLevel,
    Generic,
}

impl EntityKind {
    pub fn domain(self) -> Domain {
        match self {
            EntityKind::Song | EntityKind::Playlist | EntityKind::VolumeLevel => Domain::Media,
            EntityKind::Tab => Domain::Browser,
            EntityKind::Generic => Domain::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Song => "song",
            EntityKind::Playlist => "playlist",
            EntityKind::Tab => "tab",
            EntityKind::VolumeLevel => "volume_level",
            EntityKind::Generic => "generic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Media,
    Browser,
    #[default]
    None,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Media => "media",
            Domain::Browser => "browser",
            Domain::None => "none",
        }
    }

    /// Entity kind a rejection in this domain dismisses, with the intent it
    /// becomes.
    fn dismissal(self) -> Option<(EntityKind, Intent)> {
        match self {
            Domain::Media => Some((EntityKind::Song, Intent::Skip)),
            Domain::Browser => Some((EntityKind::Tab, Intent::CloseTab)),
            Domain::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusEntity {
    pub entity_id: String,
    pub entity_kind: EntityKind,
    pub introduced_turn: u32,
    pub last_mentioned_turn: u32,
    pub attributes: BTreeMap<String, String>,
    /// Insertion/refresh sequence; breaks same-turn ties.
    pub touched_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FocusStack {
    entities: Vec<FocusEntity>,
    next_seq: u64,
}

impl FocusStack {
    /// Most salient first.
    pub fn entities(&self) -> &[FocusEntity] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, entity_id: &str) -> Option<&FocusEntity> {
        self.entities.iter().find(|e| e.entity_id == entity_id)
    }

    pub fn head(&self) -> Option<&FocusEntity> {
        self.entities.first()
    }

    /// Inserts a new entity or refreshes an existing one as mentioned in `turn`.
    pub fn upsert(&mut self, seed: &EntitySeed, turn: u32) {
        let seq = self.next_seq;
        self.next_seq += 1;
        match self.entities.iter_mut().find(|e| e.entity_id == seed.entity_id) {
            Some(existing) => {
                existing.entity_kind = seed.kind;
                existing.attributes = seed.attributes.clone();
                existing.last_mentioned_turn = existing.last_mentioned_turn.max(turn);
                existing.touched_seq = seq;
            }
            None => self.entities.push(FocusEntity {
                entity_id: seed.entity_id.clone(),
                entity_kind: seed.kind,
                introduced_turn: turn,
                last_mentioned_turn: turn,
                attributes: seed.attributes.clone(),
                touched_seq: seq,
            }),
        }
        self.reorder();
    }

    pub fn remove(&mut self, entity_id: &str) {
        self.entities.retain(|e| e.entity_id != entity_id);
    }

    pub fn touch(&mut self, entity_id: &str, turn: u32) {
        let seq = self.next_seq;
        if let Some(e) = self.entities.iter_mut().find(|e| e.entity_id == entity_id) {
            e.last_mentioned_turn = e.last_mentioned_turn.max(turn);
            e.touched_seq = seq;
            self.next_seq += 1;
            self.reorder();
        }
    }

    fn reorder(&mut self) {
        self.entities.sort_by(|a, b| {
            b.last_mentioned_turn
                .cmp(&a.last_mentioned_turn)
                .then(b.touched_seq.cmp(&a.touched_seq))
        });
        self.entities.truncate(FOCUS_CAPACITY);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairReason {
    /// Nothing in focus the utterance could refer to.
    NoReferent,
    /// The utterance could not be interpreted.
    Unrecognized,
    /// A rejection arrived with no active domain to scope it.
    AmbiguousDomain,
}

impl RepairReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RepairReason::NoReferent => "no-referent",
            RepairReason::Unrecognized => "unrecognized",
            RepairReason::AmbiguousDomain => "ambiguous-domain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRequest {
    pub reason: RepairReason,
    pub note: String,
    pub origin: IntentFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedIntent {
    pub intent: Intent,
    pub slots: BTreeMap<String, String>,
    /// Focus-stack entity the intent acts on.
    pub target: Option<String>,
    pub resolution_notes: Vec<String>,
    pub origin: IntentFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Resolution {
    Resolved(ResolvedIntent),
    Repair(RepairRequest),
}

impl Resolution {
    pub fn origin(&self) -> &IntentFrame {
        match self {
            Resolution::Resolved(r) => &r.origin,
            Resolution::Repair(r) => &r.origin,
        }
    }

    pub fn is_repair(&self) -> bool {
        matches!(self, Resolution::Repair(_))
    }

    pub fn summary(&self) -> String {
        match self {
            Resolution::Resolved(r) => r.resolution_notes.join("; "),
            Resolution::Repair(r) => format!("repair needed ({}): {}", r.reason.as_str(), r.note),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRepair {
    pub reason: RepairReason,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub turn_index: u32,
    pub frame: IntentFrame,
    pub resolution: Resolution,
    pub action_result: Option<ActionResult>,
}

/// What a commit did to the repair counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "signal", rename_all = "snake_case")]
pub enum RepairSignal {
    None,
    Pending { attempts: u32 },
    /// Attempts reached the bound; the repair was abandoned.
    Escalated { attempts: u32 },
    /// A non-repair turn closed an open repair.
    Cleared { attempts: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    history: Vec<HistoryEntry>,
    focus: FocusStack,
    active_domain: Domain,
    pending_repair: Option<PendingRepair>,
    max_repair_attempts: u32,
}

impl Default for DialogueState {
    fn default() -> Self {
        DialogueState::new(DEFAULT_MAX_REPAIR_ATTEMPTS)
    }
}

impl DialogueState {
    pub fn new(max_repair_attempts: u32) -> Self {
        DialogueState {
            history: Vec::new(),
            focus: FocusStack::default(),
            active_domain: Domain::None,
            pending_repair: None,
            max_repair_attempts: max_repair_attempts.max(1),
        }
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn focus(&self) -> &FocusStack {
        &self.focus
    }

    pub fn focus_mut(&mut self) -> &mut FocusStack {
        &mut self.focus
    }

    pub fn active_domain(&self) -> Domain {
        self.active_domain
    }

    pub fn set_active_domain(&mut self, domain: Domain) {
        self.active_domain = domain;
    }

    pub fn pending_repair(&self) -> Option<&PendingRepair> {
        self.pending_repair.as_ref()
    }

    pub fn max_repair_attempts(&self) -> u32 {
        self.max_repair_attempts
    }

    pub fn most_salient(&self, kind: Option<EntityKind>, domain: Option<Domain>) -> Option<&FocusEntity> {
        self.focus.entities().iter().find(|e| {
            kind.is_none_or(|k| e.entity_kind == k) && domain.is_none_or(|d| e.entity_kind.domain() == d)
        })
    }

    fn resolve_target(
        &self,
        frame: &IntentFrame,
        intent: Intent,
        kind: EntityKind,
        mut notes: Vec<String>,
    ) -> Resolution {
        match self.most_salient(Some(kind), Some(kind.domain())) {
            Some(entity) => {
                notes.push(format!(
                    "implicit object \"this\" = current {} ({})",
                    kind.as_str(),
                    entity.entity_id
                ));
                let mut slots = frame.slots.clone();
                slots.insert("target".to_string(), entity.entity_id.clone());
                Resolution::Resolved(ResolvedIntent {
                    intent,
                    slots,
                    target: Some(entity.entity_id.clone()),
                    resolution_notes: notes,
                    origin: frame.clone(),
                })
            }
            None => Resolution::Repair(RepairRequest {
                reason: RepairReason::NoReferent,
                note: format!("{} needs a {} in focus and none is present", frame.intent, kind.as_str()),
                origin: frame.clone(),
            }),
        }
    }

    /// Refines a raw frame against the current state. Pure.
    pub fn resolve(&self, frame: &IntentFrame) -> Resolution {
        match frame.intent {
            Intent::Unknown => Resolution::Repair(RepairRequest {
                reason: RepairReason::Unrecognized,
                note: "no rule matched and no polarity evidence".to_string(),
                origin: frame.clone(),
            }),
            Intent::Rejection => match self.active_domain.dismissal() {
                Some((kind, intent)) => {
                    let notes = vec![format!(
                        "{} in active domain {}: rejection dismisses the current {}",
                        frame.intent,
                        self.active_domain.as_str(),
                        kind.as_str()
                    )];
                    match self.resolve_target(frame, intent, kind, notes) {
                        Resolution::Resolved(mut r) => {
                            r.resolution_notes.push(format!("intent updated to {intent}"));
                            Resolution::Resolved(r)
                        }
                        repair => repair,
                    }
                }
                None => Resolution::Repair(RepairRequest {
                    reason: if self.focus.is_empty() {
                        RepairReason::NoReferent
                    } else {
                        RepairReason::AmbiguousDomain
                    },
                    note: "rejection with no active domain".to_string(),
                    origin: frame.clone(),
                }),
            },
            Intent::Skip | Intent::StopMusic => {
                let notes = vec![format!("{} refers to the current song", frame.intent)];
                self.resolve_target(frame, frame.intent, EntityKind::Song, notes)
            }
            Intent::CloseTab => match frame.slots.get("target").and_then(|id| self.focus.get(id)) {
                Some(entity) => Resolution::Resolved(ResolvedIntent {
                    intent: Intent::CloseTab,
                    slots: frame.slots.clone(),
                    target: Some(entity.entity_id.clone()),
                    resolution_notes: vec![format!("explicit target {}", entity.entity_id)],
                    origin: frame.clone(),
                }),
                None => {
                    let notes = vec!["CLOSE_TAB refers to the current tab".to_string()];
                    self.resolve_target(frame, Intent::CloseTab, EntityKind::Tab, notes)
                }
            },
            Intent::Confirmation => {
                let note = match &self.pending_repair {
                    Some(p) => format!("confirms pending clarification ({})", p.reason.as_str()),
                    None => "acknowledgement; nothing pending".to_string(),
                };
                Resolution::Resolved(ResolvedIntent {
                    intent: Intent::Confirmation,
                    slots: frame.slots.clone(),
                    target: None,
                    resolution_notes: vec![note],
                    origin: frame.clone(),
                })
            }
            Intent::PlayMusic | Intent::OpenTab => Resolution::Resolved(ResolvedIntent {
                intent: frame.intent,
                slots: frame.slots.clone(),
                target: None,
                resolution_notes: vec![format!("{} passes through (no implicit reference)", frame.intent)],
                origin: frame.clone(),
            }),
        }
    }

    /// Records a finished turn. History only grows; entities from a
    /// successful result enter the focus stack at top salience.
    pub fn commit_turn(&mut self, resolution: &Resolution, result: Option<&ActionResult>) -> RepairSignal {
        let frame = resolution.origin();
        let turn = frame.turn_index;
        self.history.push(HistoryEntry {
            turn_index: turn,
            frame: frame.clone(),
            resolution: resolution.clone(),
            action_result: result.cloned(),
        });
        if let Resolution::Resolved(r) = resolution {
            if let Some(target) = &r.target {
                self.focus.touch(target, turn);
            }
        }
        if let Some(result) = result.filter(|r| r.status == ActionStatus::Success) {
            for id in &result.removed_entities {
                self.focus.remove(id);
            }
            for seed in &result.updated_entities {
                self.focus.upsert(seed, turn);
            }
            self.active_domain = result.domain;
        }
        match resolution {
            Resolution::Repair(req) => {
                let attempts = self.pending_repair.as_ref().map_or(1, |p| p.attempts + 1);
                if attempts >= self.max_repair_attempts {
                    self.pending_repair = None;
                    RepairSignal::Escalated { attempts }
                } else {
                    self.pending_repair = Some(PendingRepair {
                        reason: req.reason,
                        attempts,
                    });
                    RepairSignal::Pending { attempts }
                }
            }
            Resolution::Resolved(_) => match self.pending_repair.take() {
                Some(p) => RepairSignal::Cleared { attempts: p.attempts },
                None => RepairSignal::None,
            },
        }
    }
}
