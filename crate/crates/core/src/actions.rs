//! Action agents and their registry.
//!
//! Agents run only governance-approved requests. Dispatch refuses any
//! decision that is not `allow` for the same correlation id.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{Domain, EntityKind};
use crate::governance::{PolicyDecision, Verdict};
use crate::model::{agent, Intent};

/// Agent name used when no registered agent claims an intent.
pub const UNHANDLED_AGENT: &str = "action_registry";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySeed {
    pub entity_id: String,
    pub kind: EntityKind,
    pub attributes: BTreeMap<String, String>,
}

impl EntitySeed {
    fn new(entity_id: String, kind: EntityKind, attributes: &[(&str, &str)]) -> Self {
        EntitySeed {
            entity_id,
            kind,
            attributes: attributes.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub correlation_id: String,
    pub intent: Intent,
    pub category: String,
    pub slots: BTreeMap<String, String>,
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionResult {
    pub status: ActionStatus,
    pub agent: String,
    pub intent: Intent,
    /// Non-empty on success.
    pub effects: String,
    pub updated_entities: Vec<EntitySeed>,
    /// Entity ids that no longer exist.
    pub removed_entities: Vec<String>,
    pub domain: Domain,
}

impl ActionResult {
    fn success(d: &ActionAgentDescriptor, intent: Intent, effects: String, seeds: Vec<EntitySeed>) -> Self {
        ActionResult {
            status: ActionStatus::Success,
            agent: d.name.clone(),
            intent,
            effects,
            updated_entities: seeds,
            removed_entities: Vec::new(),
            domain: d.domain,
        }
    }

    fn failure(agent: &str, domain: Domain, intent: Intent, effects: String) -> Self {
        ActionResult {
            status: ActionStatus::Failure,
            agent: agent.to_string(),
            intent,
            effects,
            updated_entities: Vec::new(),
            removed_entities: Vec::new(),
            domain,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == ActionStatus::Success
    }

    pub fn summary(&self) -> String {
        match self.status {
            ActionStatus::Success => format!("{} executed: {}", self.intent, self.effects),
            ActionStatus::Failure => format!("{} failed: {}", self.intent, self.effects),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionAgentDescriptor {
    pub name: String,
    pub intents: BTreeSet<Intent>,
    pub category: String,
    pub domain: Domain,
}

pub trait ActionAgent: Send {
    fn descriptor(&self) -> &ActionAgentDescriptor;
    /// Runs an approved request and transitions the agent's state.
    fn execute(&mut self, request: &ActionRequest) -> ActionResult;
    fn state(&self) -> serde_json::Value;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaybackStatus {
    Stopped,
    Playing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaState {
    pub playlist: Vec<String>,
    pub current_index: Option<usize>,
    pub status: PlaybackStatus,
}

impl MediaState {
    pub fn new(playlist: Vec<String>) -> Self {
        MediaState {
            playlist,
            current_index: None,
            status: PlaybackStatus::Stopped,
        }
    }

    pub fn is_valid(&self) -> bool {
        match (self.status, self.current_index) {
            (PlaybackStatus::Playing, Some(i)) => i < self.playlist.len(),
            (PlaybackStatus::Stopped, None) => true,
            _ => false,
        }
    }

    pub fn current_track(&self) -> Option<&str> {
        self.current_index.map(|i| self.playlist[i].as_str())
    }
}

pub const DEFAULT_PLAYLIST_NAME: &str = "default";

pub struct MediaAgent {
    descriptor: ActionAgentDescriptor,
    state: MediaState,
}

impl MediaAgent {
    pub fn new(playlist: Vec<String>) -> Self {
        MediaAgent {
            descriptor: ActionAgentDescriptor {
                name: agent::MEDIA.to_string(),
                intents: [Intent::PlayMusic, Intent::Skip, Intent::StopMusic].into(),
                category: "music".to_string(),
                domain: Domain::Media,
            },
            state: MediaState::new(playlist),
        }
    }

    pub fn with_state(state: MediaState) -> Self {
        let mut agent = MediaAgent::new(Vec::new());
        agent.state = state;
        agent
    }

    pub fn media_state(&self) -> &MediaState {
        &self.state
    }

    fn song_seed(&self, index: usize) -> EntitySeed {
        let track = &self.state.playlist[index];
        let position = (index + 1).to_string();
        EntitySeed::new(format!("song:{track}"), EntityKind::Song, &[("track", track), ("position", &position)])
    }

    fn fail(&self, intent: Intent, why: &str) -> ActionResult {
        ActionResult::failure(&self.descriptor.name, self.descriptor.domain, intent, why.to_string())
    }
}

impl ActionAgent for MediaAgent {
    fn descriptor(&self) -> &ActionAgentDescriptor {
        &self.descriptor
    }

    fn execute(&mut self, request: &ActionRequest) -> ActionResult {
        let intent = request.intent;
        match (intent, self.state.current_index) {
            (Intent::PlayMusic, _) if self.state.playlist.is_empty() => self.fail(intent, "playlist is empty"),
            (Intent::PlayMusic, current) => {
                let index = current.unwrap_or(0);
                let started = current.is_none();
                self.state.current_index = Some(index);
                self.state.status = PlaybackStatus::Playing;
                let track = self.state.playlist[index].clone();
                let playlist = EntitySeed::new(
                    format!("playlist:{DEFAULT_PLAYLIST_NAME}"),
                    EntityKind::Playlist,
                    &[("tracks", &self.state.playlist.len().to_string())],
                );
                let effects = if started {
                    format!("playlist {DEFAULT_PLAYLIST_NAME} selected; playback started with {track}")
                } else {
                    format!("already playing {track}")
                };
                ActionResult::success(&self.descriptor, intent, effects, vec![playlist, self.song_seed(index)])
            }
            (Intent::Skip, None) => self.fail(intent, "nothing is playing"),
            (Intent::Skip, Some(i)) => {
                let next = (i + 1) % self.state.playlist.len();
                self.state.current_index = Some(next);
                let effects = format!(
                    "NEXT_TRACK {} -> {}",
                    self.state.playlist[i], self.state.playlist[next]
                );
                ActionResult::success(&self.descriptor, intent, effects, vec![self.song_seed(next)])
            }
            (Intent::StopMusic, None) => self.fail(intent, "nothing is playing"),
            (Intent::StopMusic, Some(i)) => {
                let track = self.state.playlist[i].clone();
                self.state.current_index = None;
                self.state.status = PlaybackStatus::Stopped;
                ActionResult::success(&self.descriptor, intent, format!("playback stopped at {track}"), Vec::new())
            }
            _ => self.fail(intent, "intent not handled by media"),
        }
    }

    fn state(&self) -> serde_json::Value {
        serde_json::to_value(&self.state).expect("media state serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tab {
    pub tab_id: String,
    pub destination: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowserState {
    pub tabs: Vec<Tab>,
    pub active_tab: Option<String>,
    next_id: u64,
}

impl BrowserState {
    pub fn new(destinations: Vec<String>) -> Self {
        let tabs: Vec<Tab> = destinations
            .into_iter()
            .enumerate()
            .map(|(i, destination)| Tab {
                tab_id: format!("tab-{}", i + 1),
                destination,
            })
            .collect();
        BrowserState {
            active_tab: tabs.last().map(|t| t.tab_id.clone()),
            next_id: tabs.len() as u64 + 1,
            tabs,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.active_tab
            .as_ref()
            .is_none_or(|a| self.tabs.iter().any(|t| &t.tab_id == a))
    }
}

pub const BLANK_DESTINATION: &str = "about:blank";

pub struct BrowserAgent {
    descriptor: ActionAgentDescriptor,
    state: BrowserState,
}

impl BrowserAgent {
    pub fn new(tabs: Vec<String>) -> Self {
        BrowserAgent {
            descriptor: ActionAgentDescriptor {
                name: agent::BROWSER.to_string(),
                intents: [Intent::OpenTab, Intent::CloseTab].into(),
                category: "browsing".to_string(),
                domain: Domain::Browser,
            },
            state: BrowserState::new(tabs),
        }
    }

    pub fn browser_state(&self) -> &BrowserState {
        &self.state
    }
}

impl ActionAgent for BrowserAgent {
    fn descriptor(&self) -> &ActionAgentDescriptor {
        &self.descriptor
    }

    fn execute(&mut self, request: &ActionRequest) -> ActionResult {
        let intent = request.intent;
        let name = &self.descriptor.name;
        match intent {
            Intent::OpenTab => {
                let destination = request
                    .slots
                    .get("destination")
                    .cloned()
                    .unwrap_or_else(|| BLANK_DESTINATION.to_string());
                let tab_id = format!("tab-{}", self.state.next_id);
                self.state.next_id += 1;
                self.state.tabs.push(Tab {
                    tab_id: tab_id.clone(),
                    destination: destination.clone(),
                });
                self.state.active_tab = Some(tab_id.clone());
                let seed = EntitySeed::new(format!("tab:{tab_id}"), EntityKind::Tab, &[("destination", &destination)]);
                ActionResult::success(&self.descriptor, intent, format!("opened {tab_id} at {destination}"), vec![seed])
            }
            Intent::CloseTab => {
                let wanted = request
                    .target
                    .as_deref()
                    .and_then(|t| t.strip_prefix("tab:"))
                    .map(str::to_string)
                    .or_else(|| self.state.active_tab.clone());
                let Some(pos) = wanted.and_then(|id| self.state.tabs.iter().position(|t| t.tab_id == id)) else {
                    return ActionResult::failure(name, self.descriptor.domain, intent, "no such tab is open".into());
                };
                let closed = self.state.tabs.remove(pos);
                if self.state.active_tab.as_deref() == Some(closed.tab_id.as_str()) {
                    self.state.active_tab = self.state.tabs.last().map(|t| t.tab_id.clone());
                }
                let mut result = ActionResult::success(
                    &self.descriptor,
                    intent,
                    format!("closed {} ({})", closed.tab_id, closed.destination),
                    Vec::new(),
                );
                result.removed_entities.push(format!("tab:{}", closed.tab_id));
                result
            }
            _ => ActionResult::failure(name, self.descriptor.domain, intent, "intent not handled by browser".into()),
        }
    }

    fn state(&self) -> serde_json::Value {
        serde_json::to_value(&self.state).expect("browser state serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("registration-conflict: {intent} already claimed by {existing}, cannot register {agent}")]
    RegistrationConflict { intent: Intent, existing: String, agent: String },
    #[error("gate-violation: {0}")]
    GateViolation(String),
}

#[derive(Default)]
pub struct ActionRegistry {
    agents: Vec<Box<dyn ActionAgent>>,
}

impl ActionRegistry {
    pub fn new() -> Self {
        ActionRegistry::default()
    }

    /// Media and browser mocks over the given fixtures.
    pub fn with_builtins(playlist: Vec<String>, tabs: Vec<String>) -> Self {
        let mut registry = ActionRegistry::new();
        registry.register(Box::new(MediaAgent::new(playlist))).expect("disjoint");
        registry.register(Box::new(BrowserAgent::new(tabs))).expect("disjoint");
        registry
    }

    pub fn register(&mut self, agent: Box<dyn ActionAgent>) -> Result<(), ActionError> {
        let new = agent.descriptor();
        for intent in &new.intents {
            if *intent == Intent::Unknown {
                return Err(ActionError::RegistrationConflict {
                    intent: *intent,
                    existing: "(reserved)".into(),
                    agent: new.name.clone(),
                });
            }
            if let Some(existing) = self.route(*intent) {
                return Err(ActionError::RegistrationConflict {
                    intent: *intent,
                    existing: existing.name.clone(),
                    agent: new.name.clone(),
                });
            }
        }
        self.agents.push(agent);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &ActionAgentDescriptor> {
        self.agents.iter().map(|a| a.descriptor())
    }

    pub fn route(&self, intent: Intent) -> Option<&ActionAgentDescriptor> {
        self.descriptors().find(|d| d.intents.contains(&intent))
    }

    pub fn agent_state(&self, name: &str) -> Option<serde_json::Value> {
        self.agents.iter().find(|a| a.descriptor().name == name).map(|a| a.state())
    }

    pub fn dispatch(&mut self, request: &ActionRequest, decision: &PolicyDecision) -> Result<ActionResult, ActionError> {
        if decision.verdict != Verdict::Allow {
            return Err(ActionError::GateViolation(format!(
                "{} dispatched under a {} decision",
                request.intent, decision.verdict
            )));
        }
        if decision.correlation_id != request.correlation_id {
            return Err(ActionError::GateViolation(format!(
                "decision for {} used for request {}",
                decision.correlation_id, request.correlation_id
            )));
        }
        match self.agents.iter_mut().find(|a| a.descriptor().intents.contains(&request.intent)) {
            Some(agent) => Ok(agent.execute(request)),
            None => Ok(ActionResult::failure(
                UNHANDLED_AGENT,
                Domain::None,
                request.intent,
                format!("unhandled-intent: no agent claims {}", request.intent),
            )),
        }
    }
}
