//! Session configuration.
//!
//! ```toml
//! speaker_id = "user"
//! lexicon = "lexicon.txt"        # paths are relative to this file
//! policy = "policy.txt"
//! templates = "templates.txt"
//! max_repair_attempts = 2
//!
//! [endpoint]
//! puso_gap_ms = 250
//! hold_floor_gap_ms = 600
//! end_of_turn_gap_ms = 1200
//!
//! [latency]
//! floor_ms = 0
//! ceiling_ms = 3000
//!
//! [costs]                        # per-step cost by agent name
//! understanding = 40
//!
//! [fixtures]
//! playlist = ["track-1", "track-2", "track-3"]
//! tabs = []
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::UNHANDLED_AGENT;
use crate::dialogue::DEFAULT_MAX_REPAIR_ATTEMPTS;
use crate::endpointing::EndpointConfig;
use crate::governance::PolicyRuleSet;
use crate::model::agent;
use crate::response::TemplateSet;
use crate::textfmt::LoadError;
use crate::understanding::Lexicon;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config document: {0}")]
    Document(String),
    #[error("config field `{0}` is required")]
    MissingField(&'static str),
    #[error("config field `{field}`: {source}")]
    Load {
        field: &'static str,
        #[source]
        source: LoadError,
    },
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    /// Name of the offending field, when one is known.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Document(_) => None,
            ConfigError::MissingField(f) | ConfigError::Load { field: f, .. } => Some(f),
            ConfigError::Invalid { field, .. } => Some(field),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyWindow {
    pub floor_ms: u64,
    pub ceiling_ms: u64,
}

impl Default for LatencyWindow {
    fn default() -> Self {
        LatencyWindow {
            floor_ms: 0,
            ceiling_ms: 3000,
        }
    }
}

impl LatencyWindow {
    pub fn contains(&self, gap_ms: u64) -> bool {
        self.floor_ms <= gap_ms && gap_ms <= self.ceiling_ms
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Fixtures {
    #[serde(default)]
    pub playlist: Vec<String>,
    #[serde(default)]
    pub tabs: Vec<String>,
}

fn default_speaker() -> String {
    "user".to_string()
}

fn default_max_repair() -> u32 {
    DEFAULT_MAX_REPAIR_ATTEMPTS
}

/// The config document as written. Paths are unresolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSettings {
    #[serde(default = "default_speaker")]
    pub speaker_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<String>,
    #[serde(default = "default_max_repair")]
    pub max_repair_attempts: u32,
    #[serde(default)]
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub latency: LatencyWindow,
    #[serde(default)]
    pub costs: BTreeMap<String, u64>,
    #[serde(default)]
    pub fixtures: Fixtures,
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl SessionSettings {
    pub fn from_toml_str(text: &str) -> Result<SessionSettings, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Document(e.to_string()))
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<SessionSettings, ConfigError> {
        serde_json::from_value(value).map_err(|e| ConfigError::Document(e.to_string()))
    }

    /// Deep-merges `overrides` (a table of the same shape) over these
    /// settings. Tables merge key by key; other values replace.
    pub fn with_overrides(&self, overrides: serde_json::Value) -> Result<SessionSettings, ConfigError> {
        let mut base = serde_json::to_value(self).expect("settings serialize");
        merge(&mut base, overrides);
        SessionSettings::from_json_value(base)
    }

    /// Field-level checks that need no file access.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.endpoint.validate().map_err(|e| ConfigError::Invalid {
            field: "endpoint".into(),
            message: e.to_string(),
        })?;
        if self.latency.floor_ms >= self.latency.ceiling_ms {
            return Err(ConfigError::Invalid {
                field: "latency".into(),
                message: format!(
                    "floor_ms ({}) must be below ceiling_ms ({})",
                    self.latency.floor_ms, self.latency.ceiling_ms
                ),
            });
        }
        if self.max_repair_attempts == 0 {
            return Err(ConfigError::Invalid {
                field: "max_repair_attempts".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.speaker_id.trim().is_empty() {
            return Err(ConfigError::Invalid {
                field: "speaker_id".into(),
                message: "must be non-empty".into(),
            });
        }
        for name in self.costs.keys() {
            if !agent::BUILT_IN.contains(&name.as_str()) && name != UNHANDLED_AGENT {
                return Err(ConfigError::Invalid {
                    field: format!("costs.{name}"),
                    message: format!("unknown agent (expected one of: {})", agent::BUILT_IN.join(", ")),
                });
            }
        }
        Ok(())
    }
}

/// Settings with every referenced file loaded. Cheap to clone; the loaded
/// resources are shared.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub settings: SessionSettings,
    pub lexicon: Arc<Lexicon>,
    pub policy: Arc<PolicyRuleSet>,
    pub templates: Arc<TemplateSet>,
}

fn resolve_path(base_dir: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}

impl SessionConfig {
    pub fn load(path: &Path) -> Result<SessionConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Document(format!("cannot read {}: {e}", path.display())))?;
        let settings = SessionSettings::from_toml_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        SessionConfig::from_settings(settings, dir)
    }

    /// Resolves relative paths against `base_dir` and loads every file.
    pub fn from_settings(settings: SessionSettings, base_dir: &Path) -> Result<SessionConfig, ConfigError> {
        settings.validate()?;
        let lexicon_path = settings.lexicon.as_deref().ok_or(ConfigError::MissingField("lexicon"))?;
        let policy_path = settings.policy.as_deref().ok_or(ConfigError::MissingField("policy"))?;
        let templates_path = settings.templates.as_deref().ok_or(ConfigError::MissingField("templates"))?;
        let lexicon = Lexicon::load(&resolve_path(base_dir, lexicon_path))
            .map_err(|source| ConfigError::Load { field: "lexicon", source })?;
        let policy = PolicyRuleSet::load(&resolve_path(base_dir, policy_path))
            .map_err(|source| ConfigError::Load { field: "policy", source })?;
        let templates = TemplateSet::load(&resolve_path(base_dir, templates_path))
            .map_err(|source| ConfigError::Load { field: "templates", source })?;
        let mut settings = settings;
        for p in [&mut settings.lexicon, &mut settings.policy, &mut settings.templates] {
            if let Some(s) = p.as_mut() {
                *s = resolve_path(base_dir, s).to_string_lossy().into_owned();
            }
        }
        Ok(SessionConfig {
            settings,
            lexicon: Arc::new(lexicon),
            policy: Arc::new(policy),
            templates: Arc::new(templates),
        })
    }

    /// Builds a config from already-loaded resources.
    pub fn from_parts(
        settings: SessionSettings,
        lexicon: Lexicon,
        policy: PolicyRuleSet,
        templates: TemplateSet,
    ) -> Result<SessionConfig, ConfigError> {
        settings.validate()?;
        Ok(SessionConfig {
            settings,
            lexicon: Arc::new(lexicon),
            policy: Arc::new(policy),
            templates: Arc::new(templates),
        })
    }
}
