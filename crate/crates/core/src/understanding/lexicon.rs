//! Lexicon file loader.
//!
//! ```text
//! version seed-1
//! [entries]
//! # surface   role          language  [value=<slot value>]
//! purahéi     music         gn
//! gustái      like          es
//! [rules]
//! # rule_id   priority=<int> require=<roles> [forbid=<roles>] intent=<INTENT> [bind=<role>:<slot>,...]
//! play_music  priority=10 require=want_listen,music forbid=negation intent=PLAY_MUSIC
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::normalize;
use crate::model::{Intent, LanguageTag};
use crate::textfmt::{
    comma_list, load_with, split_options, Diagnostic, DiagnosticKind, Diagnostics, Document, LoadError,
};

/// Role carried by negation particles; drives negative polarity.
pub const ROLE_NEGATION: &str = "negation";
/// Role carried by affirmation forms; drives positive polarity.
pub const ROLE_AFFIRMATION: &str = "affirmation";
/// Function words (pronouns, particles) do not count as content tokens.
pub const ROLE_FUNCTION: &str = "function";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub role: String,
    pub language: LanguageTag,
    /// Value bound into a slot instead of the surface form.
    pub value: Option<String>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRule {
    pub rule_id: String,
    pub priority: i64,
    pub required: BTreeSet<String>,
    pub forbidden: BTreeSet<String>,
    pub produces: Intent,
    /// role -> slot name
    pub bindings: BTreeMap<String, String>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<String, LexEntry>,
    /// Sorted by descending priority; ties keep file order.
    rules: Vec<PatternRule>,
    version: String,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Lexicon {
    pub fn entry(&self, normalized: &str) -> Option<&LexEntry> {
        self.entries.get(normalized)
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.entries.contains_key(normalized)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &LexEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rules in firing order.
    pub fn rules(&self) -> &[PatternRule] {
        &self.rules
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn load(path: &Path) -> Result<Lexicon, LoadError> {
        load_with(path, Lexicon::parse)
    }

    pub fn parse(source: &str) -> Result<Lexicon, Diagnostics> {
        let mut diags = Vec::new();
        let doc = Document::parse(source, &["entries", "rules"], &mut diags);
        let mut entries: BTreeMap<String, LexEntry> = BTreeMap::new();

        for line in doc.lines_of("entries") {
            let fields = line.fields();
            let (pos, opts) = split_options(line.number, &fields, &mut diags);
            let [surface, role, lang] = pos.as_slice() else {
                diags.push(Diagnostic::parse(
                    line.number,
                    format!("entry needs `surface role language`, found {} fields", pos.len()),
                ));
                continue;
            };
            let normalized = normalize(surface);
            if normalized.len() != 1 {
                diags.push(Diagnostic::parse(line.number, format!("surface {surface:?} is not a single token")));
                continue;
            }
            let normalized = normalized.into_iter().next().unwrap();
            if !valid_name(role) {
                diags.push(Diagnostic::parse(line.number, format!("invalid role name {role:?}")));
                continue;
            }
            let language = match lang.parse::<LanguageTag>() {
                Ok(l) => l,
                Err(e) => {
                    diags.push(Diagnostic::parse(line.number, e.to_string()));
                    continue;
                }
            };
            let mut value = None;
            for (k, v) in opts {
                match k {
                    "value" if !v.is_empty() => value = Some(v.to_string()),
                    _ => diags.push(Diagnostic::parse(line.number, format!("unknown entry option `{k}={v}`"))),
                }
            }
            if let Some(existing) = entries.get(&normalized) {
                diags.push(Diagnostic::new(
                    line.number,
                    DiagnosticKind::LexiconConflict,
                    format!(
                        "duplicate surface form {normalized:?} (lines {} and {})",
                        existing.line, line.number
                    ),
                ));
                continue;
            }
            entries.insert(
                normalized,
                LexEntry {
                    role: role.to_string(),
                    language,
                    value,
                    line: line.number,
                },
            );
        }

        let mut rules: Vec<PatternRule> = Vec::new();
        for line in doc.lines_of("rules") {
            let fields = line.fields();
            let (pos, opts) = split_options(line.number, &fields, &mut diags);
            let [rule_id] = pos.as_slice() else {
                diags.push(Diagnostic::parse(line.number, "rule needs exactly one positional field, the rule_id"));
                continue;
            };
            let mut priority = None;
            let mut required = BTreeSet::new();
            let mut forbidden = BTreeSet::new();
            let mut produces = None;
            let mut bindings = BTreeMap::new();
            let mut ok = true;
            for (k, v) in opts {
                match k {
                    "priority" => match v.parse::<i64>() {
                        Ok(p) => priority = Some(p),
                        Err(_) => {
                            diags.push(Diagnostic::parse(line.number, format!("priority {v:?} is not an integer")));
                            ok = false;
                        }
                    },
                    "require" => required = comma_list(v).into_iter().collect(),
                    "forbid" => forbidden = comma_list(v).into_iter().collect(),
                    "intent" => match v.parse::<Intent>() {
                        Ok(i) => produces = Some(i),
                        Err(_) => {
                            diags.push(Diagnostic::new(
                                line.number,
                                DiagnosticKind::UnknownIntent,
                                format!("rule {rule_id} produces unknown intent {v:?}"),
                            ));
                            ok = false;
                        }
                    },
                    "bind" => {
                        for pair in comma_list(v) {
                            match pair.split_once(':') {
                                Some((role, slot)) if valid_name(role) && valid_name(slot) => {
                                    bindings.insert(role.to_string(), slot.to_string());
                                }
                                _ => {
                                    diags.push(Diagnostic::parse(
                                        line.number,
                                        format!("binding {pair:?} must be role:slot"),
                                    ));
                                    ok = false;
                                }
                            }
                        }
                    }
                    _ => {
                        diags.push(Diagnostic::parse(line.number, format!("unknown rule option `{k}`")));
                        ok = false;
                    }
                }
            }
            if required.is_empty() {
                diags.push(Diagnostic::parse(line.number, format!("rule {rule_id} must require at least one role")));
                ok = false;
            }
            if let Some(role) = required.intersection(&forbidden).next() {
                diags.push(Diagnostic::parse(
                    line.number,
                    format!("rule {rule_id} both requires and forbids role {role:?}"),
                ));
                ok = false;
            }
            for role in required.iter().chain(forbidden.iter()).chain(bindings.keys()) {
                if !valid_name(role) {
                    diags.push(Diagnostic::parse(line.number, format!("invalid role name {role:?}")));
                    ok = false;
                }
            }
            if priority.is_none() && ok {
                diags.push(Diagnostic::parse(line.number, format!("rule {rule_id} is missing priority=")));
                ok = false;
            }
            if produces.is_none() && ok {
                diags.push(Diagnostic::parse(line.number, format!("rule {rule_id} is missing intent=")));
                ok = false;
            }
            if let Some(existing) = rules.iter().find(|r| r.rule_id == *rule_id) {
                diags.push(Diagnostic::new(
                    line.number,
                    DiagnosticKind::LexiconConflict,
                    format!("duplicate rule_id {rule_id} (lines {} and {})", existing.line, line.number),
                ));
                ok = false;
            }
            if ok {
                rules.push(PatternRule {
                    rule_id: rule_id.to_string(),
                    priority: priority.unwrap(),
                    required,
                    forbidden,
                    produces: produces.unwrap(),
                    bindings,
                    line: line.number,
                });
            }
        }

        if !diags.is_empty() {
            return Err(Diagnostics(diags));
        }
        // stable: equal priorities keep file order
        rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
        Ok(Lexicon {
            entries,
            rules,
            version: doc.version.unwrap_or_else(|| "unversioned".to_string()),
        })
    }
}
