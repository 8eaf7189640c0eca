//! Permission and governance agent.
//!
//! Policy file grammar:
//!
//! ```text
//! version community-1
//! [action_rules]
//! # rule_id   category|*       allow|deny|ask
//! allow_music music            allow
//! [response_rules]
//! # rule_id   kind|*           allow|deny
//! [retention]
//! never                        # never | session | persistent
//! [default]
//! deny                         # allow | deny
//! ```
//!
//! Absent `[retention]` means never-store; absent `[default]` means deny.
//! Response kinds without a rule are allowed, except `consent_prompt`,
//! which follows the default verdict.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Intent;
use crate::response::ResponseKind;
use crate::textfmt::{load_with, Diagnostic, DiagnosticKind, Diagnostics, Document, LoadError};

pub const DEFAULT_RULE_ID: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Allow,
    Deny,
    Ask,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Allow => "allow",
            Verdict::Deny => "deny",
            Verdict::Ask => "ask",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "allow" => Ok(Verdict::Allow),
            "deny" => Ok(Verdict::Deny),
            "ask" => Ok(Verdict::Ask),
            other => Err(format!("unknown verdict {other:?} (expected allow, deny or ask)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RetentionPolicy {
    #[default]
    Never,
    Session,
    Persistent,
}

impl RetentionPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            RetentionPolicy::Never => "never",
            RetentionPolicy::Session => "session",
            RetentionPolicy::Persistent => "persistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Matcher {
    Any,
    Exact(String),
}

impl Matcher {
    fn parse(s: &str) -> Matcher {
        if s == "*" {
            Matcher::Any
        } else {
            Matcher::Exact(s.to_string())
        }
    }

    pub fn matches(&self, value: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Exact(v) => v == value,
        }
    }

    fn describe(&self) -> String {
        match self {
            Matcher::Any => "*".to_string(),
            Matcher::Exact(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub rule_id: String,
    pub matcher: Matcher,
    pub verdict: Verdict,
    pub line: usize,
}

/// Immutable once loaded; shared across sessions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRuleSet {
    pub action_rules: Vec<PolicyRule>,
    pub response_rules: Vec<PolicyRule>,
    pub retention_default: RetentionPolicy,
    pub default_verdict: Verdict,
    pub version: String,
}

impl Default for PolicyRuleSet {
    fn default() -> Self {
        PolicyRuleSet {
            action_rules: Vec::new(),
            response_rules: Vec::new(),
            retention_default: RetentionPolicy::Never,
            default_verdict: Verdict::Deny,
            version: "unversioned".to_string(),
        }
    }
}

const SECTIONS: [&str; 4] = ["action_rules", "response_rules", "retention", "default"];

impl PolicyRuleSet {
    pub fn load(path: &Path) -> Result<PolicyRuleSet, LoadError> {
        load_with(path, PolicyRuleSet::parse)
    }

    pub fn parse(source: &str) -> Result<PolicyRuleSet, Diagnostics> {
        let mut diags = Vec::new();
        let doc = Document::parse(source, &SECTIONS, &mut diags);
        let mut set = PolicyRuleSet {
            version: doc.version.clone().unwrap_or_else(|| "unversioned".to_string()),
            ..PolicyRuleSet::default()
        };
        let mut seen: Vec<(String, usize)> = Vec::new();

        for section in ["action_rules", "response_rules"] {
            for line in doc.lines_of(section) {
                let fields = line.fields();
                let [rule_id, matcher, verdict] = fields.as_slice() else {
                    diags.push(Diagnostic::parse(
                        line.number,
                        format!("rule needs `rule_id matcher verdict`, found {} fields", fields.len()),
                    ));
                    continue;
                };
                if let Some((_, first)) = seen.iter().find(|(id, _)| id == rule_id) {
                    diags.push(Diagnostic::new(
                        line.number,
                        DiagnosticKind::PolicyConflict,
                        format!("duplicate rule_id {rule_id} (lines {first} and {})", line.number),
                    ));
                    continue;
                }
                seen.push((rule_id.to_string(), line.number));
                if *rule_id == DEFAULT_RULE_ID {
                    diags.push(Diagnostic::parse(line.number, "rule_id `default` is reserved"));
                    continue;
                }
                let verdict = match verdict.parse::<Verdict>() {
                    Ok(v) => v,
                    Err(e) => {
                        diags.push(Diagnostic::parse(line.number, e));
                        continue;
                    }
                };
                let rule = PolicyRule {
                    rule_id: rule_id.to_string(),
                    matcher: Matcher::parse(matcher),
                    verdict,
                    line: line.number,
                };
                if section == "action_rules" {
                    set.action_rules.push(rule);
                    continue;
                }
                if verdict == Verdict::Ask {
                    diags.push(Diagnostic::parse(line.number, "response rules cannot use `ask`"));
                    continue;
                }
                if let Matcher::Exact(kind) = &rule.matcher {
                    if kind.parse::<ResponseKind>().is_err() {
                        diags.push(Diagnostic::parse(line.number, format!("unknown response kind {kind:?}")));
                        continue;
                    }
                }
                set.response_rules.push(rule);
            }
        }

        let single = |name: &str, diags: &mut Vec<Diagnostic>| -> Option<(usize, String)> {
            let lines: Vec<_> = doc.lines_of(name).collect();
            match lines.as_slice() {
                [] => None,
                [line] => Some((line.number, line.text.clone())),
                [_, extra, ..] => {
                    diags.push(Diagnostic::parse(extra.number, format!("[{name}] takes a single value")));
                    None
                }
            }
        };
        if let Some((number, text)) = single("retention", &mut diags) {
            match text.as_str() {
                "never" => set.retention_default = RetentionPolicy::Never,
                "session" => set.retention_default = RetentionPolicy::Session,
                "persistent" => set.retention_default = RetentionPolicy::Persistent,
                other => diags.push(Diagnostic::parse(
                    number,
                    format!("unknown retention {other:?} (expected never, session or persistent)"),
                )),
            }
        }
        if let Some((number, text)) = single("default", &mut diags) {
            match text.parse::<Verdict>() {
                Ok(Verdict::Ask) => diags.push(Diagnostic::parse(number, "default verdict must be allow or deny")),
                Ok(v) => set.default_verdict = v,
                Err(e) => diags.push(Diagnostic::parse(number, e)),
            }
        }

        if diags.is_empty() {
            Ok(set)
        } else {
            Err(Diagnostics(diags))
        }
    }

    pub fn has_rule(&self, rule_id: &str) -> bool {
        rule_id == DEFAULT_RULE_ID
            || self
                .action_rules
                .iter()
                .chain(&self.response_rules)
                .any(|r| r.rule_id == rule_id)
    }

    /// Verdict before consent is consulted.
    fn action_rule(&self, category: &str) -> Option<&PolicyRule> {
        self.action_rules.iter().find(|r| r.matcher.matches(category))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConsentScope {
    StoreAudio,
    StoreTranscript,
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid-scope: {0:?} (expected store_audio, store_transcript or category:<name>)")]
pub struct InvalidScope(pub String);

impl FromStr for ConsentScope {
    type Err = InvalidScope;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "store_audio" => Ok(ConsentScope::StoreAudio),
            "store_transcript" => Ok(ConsentScope::StoreTranscript),
            _ => match s.strip_prefix("category:") {
                Some(name)
                    if !name.is_empty()
                        && name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') =>
                {
                    Ok(ConsentScope::Category(name.to_string()))
                }
                _ => Err(InvalidScope(s.to_string())),
            },
        }
    }
}

impl fmt::Display for ConsentScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsentScope::StoreAudio => f.write_str("store_audio"),
            ConsentScope::StoreTranscript => f.write_str("store_transcript"),
            ConsentScope::Category(c) => write!(f, "category:{c}"),
        }
    }
}

impl Serialize for ConsentScope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConsentScope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentChange {
    Grant,
    Revoke,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub scope: ConsentScope,
    pub turn_index: u32,
}

/// Grants and revocations, each stamped with the turn from which it applies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConsentState {
    grants: Vec<ConsentRecord>,
    revocations: Vec<ConsentRecord>,
    /// (change, index into grants/revocations) in arrival order.
    #[serde(skip)]
    order: Vec<(ConsentChange, usize)>,
}

impl ConsentState {
    pub fn record(&mut self, scope: ConsentScope, change: ConsentChange, turn_index: u32) {
        let rec = ConsentRecord { scope, turn_index };
        let list = match change {
            ConsentChange::Grant => &mut self.grants,
            ConsentChange::Revoke => &mut self.revocations,
        };
        list.push(rec);
        self.order.push((change, list.len() - 1));
    }

    pub fn grants(&self) -> &[ConsentRecord] {
        &self.grants
    }

    pub fn revocations(&self) -> &[ConsentRecord] {
        &self.revocations
    }

    /// Latest change with `turn_index <= turn`; a later arrival wins a tie.
    pub fn is_granted(&self, scope: &ConsentScope, turn: u32) -> bool {
        let mut best: Option<(u32, usize, ConsentChange)> = None;
        for (arrival, (change, idx)) in self.order.iter().enumerate() {
            let rec = match change {
                ConsentChange::Grant => &self.grants[*idx],
                ConsentChange::Revoke => &self.revocations[*idx],
            };
            if rec.scope != *scope || rec.turn_index > turn {
                continue;
            }
            if best.is_none_or(|(t, a, _)| (rec.turn_index, arrival) > (t, a)) {
                best = Some((rec.turn_index, arrival, *change));
            }
        }
        matches!(best, Some((_, _, ConsentChange::Grant)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSubject {
    Action,
    Response,
    Retention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub verdict: Verdict,
    pub rule_id: String,
    pub rationale: String,
    pub decided_at_ms: u64,
    pub correlation_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionContext<'a> {
    pub correlation_id: &'a str,
    pub turn_index: u32,
    pub at_ms: u64,
}

/// Action gate. Total.
pub fn evaluate_action(
    policy: &PolicyRuleSet,
    consent: &ConsentState,
    intent: Intent,
    category: &str,
    ctx: &DecisionContext<'_>,
) -> PolicyDecision {
    let decide = |verdict: Verdict, rule_id: &str, rationale: String| PolicyDecision {
        verdict,
        rule_id: rule_id.to_string(),
        rationale,
        decided_at_ms: ctx.at_ms,
        correlation_id: ctx.correlation_id.to_string(),
    };
    match policy.action_rule(category) {
        Some(rule) if rule.verdict == Verdict::Ask => {
            let scope = ConsentScope::Category(category.to_string());
            if consent.is_granted(&scope, ctx.turn_index) {
                decide(
                    Verdict::Allow,
                    &rule.rule_id,
                    format!("rule {} asks for consent on category {category}; standing grant {scope} allows {intent}", rule.rule_id),
                )
            } else {
                decide(
                    Verdict::Ask,
                    &rule.rule_id,
                    format!("rule {} asks for consent on category {category}; no grant of {scope}", rule.rule_id),
                )
            }
        }
        Some(rule) => decide(
            rule.verdict,
            &rule.rule_id,
            format!(
                "rule {} ({}) matched category {category}: {} {intent}",
                rule.rule_id,
                rule.matcher.describe(),
                rule.verdict
            ),
        ),
        None => decide(
            policy.default_verdict,
            DEFAULT_RULE_ID,
            format!("no rule for category {category}: default {} {intent}", policy.default_verdict),
        ),
    }
}

/// Response gate. Never returns `ask`.
pub fn evaluate_response(policy: &PolicyRuleSet, kind: ResponseKind, ctx: &DecisionContext<'_>) -> PolicyDecision {
    let (verdict, rule_id, rationale) = match policy.response_rules.iter().find(|r| r.matcher.matches(kind.as_str())) {
        Some(rule) => (
            rule.verdict,
            rule.rule_id.clone(),
            format!("rule {} matched response kind {kind}: {}", rule.rule_id, rule.verdict),
        ),
        None if kind == ResponseKind::ConsentPrompt => (
            policy.default_verdict,
            DEFAULT_RULE_ID.to_string(),
            format!("no rule for response kind {kind}: default {}", policy.default_verdict),
        ),
        None => (
            Verdict::Allow,
            DEFAULT_RULE_ID.to_string(),
            format!("no rule for response kind {kind}: explanatory responses default to allow"),
        ),
    };
    PolicyDecision {
        verdict,
        rule_id,
        rationale,
        decided_at_ms: ctx.at_ms,
        correlation_id: ctx.correlation_id.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Audio,
    Transcript,
}

impl ArtifactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Audio => "audio",
            ArtifactKind::Transcript => "transcript",
        }
    }

    pub fn scope(self) -> ConsentScope {
        match self {
            ArtifactKind::Audio => ConsentScope::StoreAudio,
            ArtifactKind::Transcript => ConsentScope::StoreTranscript,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionDecision {
    Discard,
    KeepSession,
    KeepPersistent,
}

impl RetentionDecision {
    pub fn keeps(self) -> bool {
        self != RetentionDecision::Discard
    }
}

/// Keeps only when consent grants the artifact's scope and the policy
/// retention permits storage.
pub fn decide_retention(
    policy: &PolicyRuleSet,
    consent: &ConsentState,
    artifact: ArtifactKind,
    turn: u32,
) -> RetentionDecision {
    if !consent.is_granted(&artifact.scope(), turn) {
        return RetentionDecision::Discard;
    }
    match policy.retention_default {
        RetentionPolicy::Never => RetentionDecision::Discard,
        RetentionPolicy::Session => RetentionDecision::KeepSession,
        RetentionPolicy::Persistent => RetentionDecision::KeepPersistent,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditSubject {
    Action,
    Response,
    Retention,
    Consent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub correlation_id: String,
    pub subject: AuditSubject,
    /// Absent for consent updates, which are not engine decisions.
    pub decision: Option<PolicyDecision>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AuditLog {
    entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn append(
        &mut self,
        correlation_id: &str,
        subject: AuditSubject,
        decision: Option<PolicyDecision>,
        summary: String,
    ) {
        let seq = self.entries.len() as u64 + 1;
        self.entries.push(AuditEntry {
            seq,
            correlation_id: correlation_id.to_string(),
            subject,
            decision,
            summary,
        });
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A retained artifact, held for the lifetime implied by its decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainedArtifact {
    pub correlation_id: String,
    pub turn_index: u32,
    pub kind: ArtifactKind,
    pub decision: RetentionDecision,
    pub content: String,
}

/// Per-session governance: the shared policy plus this session's consent,
/// audit log and retention store. Every decision it issues is audited.
#[derive(Debug, Clone)]
pub struct Gatekeeper {
    policy: std::sync::Arc<PolicyRuleSet>,
    consent: ConsentState,
    audit: AuditLog,
    retained: Vec<RetainedArtifact>,
    decisions_issued: u64,
}

impl Gatekeeper {
    pub fn new(policy: std::sync::Arc<PolicyRuleSet>) -> Self {
        Gatekeeper {
            policy,
            consent: ConsentState::default(),
            audit: AuditLog::default(),
            retained: Vec::new(),
            decisions_issued: 0,
        }
    }

    pub fn policy(&self) -> &PolicyRuleSet {
        &self.policy
    }

    pub fn consent(&self) -> &ConsentState {
        &self.consent
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn retained(&self) -> &[RetainedArtifact] {
        &self.retained
    }

    pub fn decisions_issued(&self) -> u64 {
        self.decisions_issued
    }

    pub fn gate_action(&mut self, intent: Intent, category: &str, ctx: &DecisionContext<'_>) -> PolicyDecision {
        let d = evaluate_action(&self.policy, &self.consent, intent, category, ctx);
        self.decisions_issued += 1;
        self.audit.append(
            ctx.correlation_id,
            AuditSubject::Action,
            Some(d.clone()),
            format!("{intent} (category {category})"),
        );
        d
    }

    pub fn gate_response(&mut self, kind: ResponseKind, template_id: &str, ctx: &DecisionContext<'_>) -> PolicyDecision {
        let d = evaluate_response(&self.policy, kind, ctx);
        self.decisions_issued += 1;
        self.audit.append(
            ctx.correlation_id,
            AuditSubject::Response,
            Some(d.clone()),
            format!("{kind} via template {template_id}"),
        );
        d
    }

    /// Decides and, on keep, stores the artifact.
    pub fn retain(&mut self, artifact: ArtifactKind, content: &str, ctx: &DecisionContext<'_>) -> RetentionDecision {
        let decision = decide_retention(&self.policy, &self.consent, artifact, ctx.turn_index);
        let granted = self.consent.is_granted(&artifact.scope(), ctx.turn_index);
        let rationale = format!(
            "{} consent {}; policy retention {}: {}",
            artifact.scope(),
            if granted { "granted" } else { "absent" },
            self.policy.retention_default.as_str(),
            match decision {
                RetentionDecision::Discard => "discard",
                RetentionDecision::KeepSession => "keep for the session",
                RetentionDecision::KeepPersistent => "keep persistently",
            }
        );
        let d = PolicyDecision {
            verdict: if decision.keeps() { Verdict::Allow } else { Verdict::Deny },
            rule_id: DEFAULT_RULE_ID.to_string(),
            rationale,
            decided_at_ms: ctx.at_ms,
            correlation_id: ctx.correlation_id.to_string(),
        };
        self.decisions_issued += 1;
        self.audit.append(
            ctx.correlation_id,
            AuditSubject::Retention,
            Some(d),
            format!("{} of turn {}", artifact.as_str(), ctx.turn_index),
        );
        if decision.keeps() {
            self.retained.push(RetainedArtifact {
                correlation_id: ctx.correlation_id.to_string(),
                turn_index: ctx.turn_index,
                kind: artifact,
                decision,
                content: content.to_string(),
            });
        }
        decision
    }

    pub fn update_consent(&mut self, scope: ConsentScope, change: ConsentChange, effective_from: u32) {
        let summary = format!(
            "{} {scope} effective from turn {effective_from}",
            match change {
                ConsentChange::Grant => "grant",
                ConsentChange::Revoke => "revoke",
            }
        );
        self.consent.record(scope, change, effective_from);
        self.audit
            .append(&format!("consent-{}", self.audit.len() + 1), AuditSubject::Consent, None, summary);
    }
}
