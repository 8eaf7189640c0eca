//! Response agent: template planning and rendering.
//!
//! Template file grammar, one template per line:
//!
//! ```text
//! version seed-1
//! [templates]
//! # id       kind          [fills=a,b] : text with {a} placeholders
//! ok_basic   confirmation              : Oĩ porã
//! ```
//!
//! Templates are chosen by kind in file order. Each kind must have at least
//! one template, and each declared fill must be one the planner provides for
//! that kind.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{ActionResult, ActionStatus};
use crate::dialogue::{DialogueState, RepairRequest, ResolvedIntent};
use crate::governance::PolicyDecision;
use crate::model::{Intent, LanguageTag};
use crate::textfmt::{comma_list, load_with, split_options, Diagnostic, DiagnosticKind, Diagnostics, Document, LoadError};

/// Non-linguistic status signal delivered when governance withholds a response.
pub const WITHHELD_MARKER: &str = "[response-withheld]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Confirmation,
    Denial,
    RepairPrompt,
    ConsentPrompt,
}

impl ResponseKind {
    pub const ALL: [ResponseKind; 4] = [
        ResponseKind::Confirmation,
        ResponseKind::Denial,
        ResponseKind::RepairPrompt,
        ResponseKind::ConsentPrompt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResponseKind::Confirmation => "confirmation",
            ResponseKind::Denial => "denial",
            ResponseKind::RepairPrompt => "repair_prompt",
            ResponseKind::ConsentPrompt => "consent_prompt",
        }
    }

    /// Fill names the planner supplies for this kind.
    pub fn fill_vocabulary(self) -> &'static [&'static str] {
        match self {
            ResponseKind::Confirmation => &["intent", "effects", "entity"],
            ResponseKind::Denial => &["rule_id", "intent", "reason"],
            ResponseKind::RepairPrompt => &["reason"],
            ResponseKind::ConsentPrompt => &["category", "intent"],
        }
    }
}

impl fmt::Display for ResponseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResponseKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResponseKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown response kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub template_id: String,
    pub kind: ResponseKind,
    pub fills: BTreeSet<String>,
    pub text: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    /// File order.
    templates: Vec<Template>,
    version: String,
}

fn placeholders(text: &str) -> Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| "unterminated `{` in template text".to_string())?;
        let name = &after[..close];
        if name.is_empty() || name.contains('{') {
            return Err(format!("malformed placeholder in {text:?}"));
        }
        out.push(name);
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err("stray `}` in template text".to_string());
    }
    Ok(out)
}

impl TemplateSet {
    pub fn load(path: &Path) -> Result<TemplateSet, LoadError> {
        load_with(path, TemplateSet::parse)
    }

    pub fn parse(source: &str) -> Result<TemplateSet, Diagnostics> {
        let mut diags = Vec::new();
        let doc = Document::parse(source, &["templates"], &mut diags);
        let mut templates: Vec<Template> = Vec::new();
        for line in doc.lines_of("templates") {
            let Some((head, text)) = line.text.split_once(" : ") else {
                diags.push(Diagnostic::parse(line.number, "template needs `id kind [fills=..] : text`"));
                continue;
            };
            let text = text.trim();
            let fields: Vec<&str> = head.split_whitespace().collect();
            let (pos, opts) = split_options(line.number, &fields, &mut diags);
            let [id, kind] = pos.as_slice() else {
                diags.push(Diagnostic::parse(line.number, "template header needs `id kind`"));
                continue;
            };
            let kind = match kind.parse::<ResponseKind>() {
                Ok(k) => k,
                Err(e) => {
                    diags.push(Diagnostic::parse(line.number, e));
                    continue;
                }
            };
            let mut fills = BTreeSet::new();
            let mut ok = true;
            for (k, v) in opts {
                if k == "fills" {
                    fills = comma_list(v).into_iter().collect();
                } else {
                    diags.push(Diagnostic::parse(line.number, format!("unknown template option `{k}`")));
                    ok = false;
                }
            }
            if text.is_empty() {
                diags.push(Diagnostic::parse(line.number, format!("template {id} has empty text")));
                ok = false;
            }
            for fill in &fills {
                if !kind.fill_vocabulary().contains(&fill.as_str()) {
                    diags.push(Diagnostic::new(
                        line.number,
                        DiagnosticKind::Validation,
                        format!(
                            "template {id}: fill {fill:?} is not provided for {kind} (available: {})",
                            kind.fill_vocabulary().join(", ")
                        ),
                    ));
                    ok = false;
                }
            }
            match placeholders(text) {
                Ok(names) => {
                    for name in names {
                        if !fills.contains(name) {
                            diags.push(Diagnostic::new(
                                line.number,
                                DiagnosticKind::Validation,
                                format!("template {id}: placeholder {{{name}}} is not a declared fill"),
                            ));
                            ok = false;
                        }
                    }
                }
                Err(e) => {
                    diags.push(Diagnostic::parse(line.number, e));
                    ok = false;
                }
            }
            if let Some(existing) = templates.iter().find(|t| t.template_id == *id) {
                diags.push(Diagnostic::new(
                    line.number,
                    DiagnosticKind::TemplateConflict,
                    format!("duplicate template_id {id} (lines {} and {})", existing.line, line.number),
                ));
                ok = false;
            }
            if ok {
                templates.push(Template {
                    template_id: id.to_string(),
                    kind,
                    fills,
                    text: text.to_string(),
                    line: line.number,
                });
            }
        }
        if diags.is_empty() {
            for kind in ResponseKind::ALL {
                if !templates.iter().any(|t| t.kind == kind) {
                    diags.push(Diagnostic::new(
                        0,
                        DiagnosticKind::MissingTemplate,
                        format!("no template for response kind {kind}"),
                    ));
                }
            }
        }
        if !diags.is_empty() {
            return Err(Diagnostics(diags));
        }
        Ok(TemplateSet {
            templates,
            version: doc.version.unwrap_or_else(|| "unversioned".to_string()),
        })
    }

    pub fn get(&self, template_id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.template_id == template_id)
    }

    pub fn first_of(&self, kind: ResponseKind) -> &Template {
        self.templates
            .iter()
            .find(|t| t.kind == kind)
            .expect("completeness checked at load")
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsePlan {
    pub kind: ResponseKind,
    pub template_id: String,
    pub fills: BTreeMap<String, String>,
    pub target_language: LanguageTag,
}

impl ResponsePlan {
    pub fn summary(&self) -> String {
        format!("{} via template {}", self.kind, self.template_id)
    }
}

/// What the response agent is answering this turn.
#[derive(Debug, Clone, Copy)]
pub enum ResponseTrigger<'a> {
    Action(&'a ActionResult),
    /// Deny or ask from the action gate.
    Decision {
        decision: &'a PolicyDecision,
        intent: Intent,
        category: &'a str,
    },
    Repair(&'a RepairRequest),
    /// A resolved intent that needs no action agent.
    Acknowledge(&'a ResolvedIntent),
}

/// Picks the first template of the trigger's kind and binds its fills.
pub fn plan_response(state: &DialogueState, trigger: ResponseTrigger<'_>, templates: &TemplateSet) -> ResponsePlan {
    let entity = || state.focus().head().map(|e| e.entity_id.clone()).unwrap_or_default();
    let (kind, values): (ResponseKind, Vec<(&str, String)>) = match trigger {
        ResponseTrigger::Action(r) if r.status == ActionStatus::Success => (
            ResponseKind::Confirmation,
            vec![("intent", r.intent.to_string()), ("effects", r.effects.clone()), ("entity", entity())],
        ),
        ResponseTrigger::Action(r) => (
            ResponseKind::Denial,
            vec![
                ("rule_id", String::new()),
                ("intent", r.intent.to_string()),
                ("reason", r.effects.clone()),
            ],
        ),
        ResponseTrigger::Decision {
            decision,
            intent,
            category,
        } => match decision.verdict {
            crate::governance::Verdict::Ask => (
                ResponseKind::ConsentPrompt,
                vec![("category", category.to_string()), ("intent", intent.to_string())],
            ),
            _ => (
                ResponseKind::Denial,
                vec![
                    ("rule_id", decision.rule_id.clone()),
                    ("intent", intent.to_string()),
                    ("reason", decision.rationale.clone()),
                ],
            ),
        },
        ResponseTrigger::Repair(req) => (ResponseKind::RepairPrompt, vec![("reason", req.reason.as_str().to_string())]),
        ResponseTrigger::Acknowledge(r) => (
            ResponseKind::Confirmation,
            vec![
                ("intent", r.intent.to_string()),
                ("effects", r.resolution_notes.join("; ")),
                ("entity", entity()),
            ],
        ),
    };
    let template = templates.first_of(kind);
    let fills = values
        .into_iter()
        .filter(|(name, _)| template.fills.contains(*name))
        .map(|(name, value)| (name.to_string(), value))
        .collect();
    ResponsePlan {
        kind,
        template_id: template.template_id.clone(),
        fills,
        target_language: LanguageTag::Gn,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("configuration error: unknown template_id {0:?}")]
    UnknownTemplate(String),
    #[error("configuration error: template {template} has no value for {{{fill}}}")]
    MissingFill { template: String, fill: String },
}

pub fn render(plan: &ResponsePlan, templates: &TemplateSet) -> Result<String, ResponseError> {
    let template = templates
        .get(&plan.template_id)
        .ok_or_else(|| ResponseError::UnknownTemplate(plan.template_id.clone()))?;
    let mut out = String::with_capacity(template.text.len());
    let mut rest = template.text.as_str();
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').expect("placeholders validated at load");
        let name = &after[..close];
        let value = plan.fills.get(name).ok_or_else(|| ResponseError::MissingFill {
            template: template.template_id.clone(),
            fill: name.to_string(),
        })?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// How a turn's response ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Delivery {
    Spoken { text: String, template_id: String },
    /// Governance denied the plan; the marker was delivered instead.
    Withheld { marker: String, template_id: String, rule_id: String },
    /// The user resumed speaking before delivery.
    Cancelled { text: String, template_id: String, by_token_at_ms: u64 },
}

impl Delivery {
    /// Text the user heard, if any.
    pub fn delivered_text(&self) -> Option<&str> {
        match self {
            Delivery::Spoken { text, .. } => Some(text),
            Delivery::Withheld { marker, .. } => Some(marker),
            Delivery::Cancelled { .. } => None,
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Delivery::Spoken { text, .. } => format!("delivered: {text}"),
            Delivery::Withheld { marker, rule_id, .. } => format!("withheld: {marker} (rule {rule_id})"),
            Delivery::Cancelled { text, by_token_at_ms, .. } => {
                format!("cancelled: {text} (barge-in at {by_token_at_ms} ms)")
            }
        }
    }
}
