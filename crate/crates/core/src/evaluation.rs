//! Scenario replay and metrics.
//!
//! Scenario file (TOML):
//!
//! ```toml
//! id = "table1_golden"
//! description = "play music, then reject the current song"
//!
//! [config]                       # optional overrides of the session config
//! max_repair_attempts = 2
//!
//! [[steps]]
//! id = "s1"
//! at_ms = 0
//! text = "Che ahenduse purahéi"  # or: events = [{ type = "token", ... }, { type = "silence", ms = 1200 }]
//! # token_ms = 300, gap_ms = 100, trailing_ms = 1200 shape the text shorthand
//! # fault = "garble_tokens" | "drop_turn"
//! # consent = [{ scope = "store_audio", change = "grant" }]   applied before the events
//! expect = { intent = "PLAY_MUSIC", action = "PLAY_MUSIC", response = "confirmation" }
//! # resolved = "<INTENT>" | "repair"; action = "<INTENT>" | "none"
//!
//! [[goals]]
//! id = "music_skipped"
//! require = [{ steps = ["s1"], action = "PLAY_MUSIC" }, { steps = ["s2"], action = "SKIP" }]
//! ```
//!
//! Event times are absolute and must be ordered across the whole script.
//! A goal clause holds when some outcome of the listed steps (any step if
//! omitted) executed the action successfully.
//!
//! A breakdown is one repair episode: consecutive turns that were not
//! understood or needed clarification. It is repaired when the turn that
//! ends it executes an action, and unrepaired when it escalates or the
//! script ends first.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, LatencyWindow, SessionConfig, SessionSettings};
use crate::dialogue::RepairSignal;
use crate::governance::{AuditEntry, ConsentChange, ConsentScope, ConsentState, RetainedArtifact, RetentionPolicy};
use crate::model::{InputEvent, Intent, TimedToken};
use crate::orchestrator::{Session, SessionError, TurnOutcome};
use crate::response::ResponseKind;
use crate::textfmt::{Diagnostic, DiagnosticKind, Diagnostics, LoadError};
use crate::understanding::{normalize, Lexicon};

pub const DEFAULT_TOKEN_MS: u64 = 300;
pub const DEFAULT_GAP_MS: u64 = 100;
pub const DEFAULT_TRAILING_MS: u64 = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Replace every surface with an out-of-lexicon form.
    GarbleTokens,
    /// The turn is never heard.
    DropTurn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentOp {
    pub scope: String,
    pub change: ConsentChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionExpectation {
    NoAction,
    Executed(Intent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolvedExpectation {
    Repair,
    Intent(Intent),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Expectation {
    /// Intent of the raw frame.
    pub intent: Option<Intent>,
    /// Intent after reference resolution, or `repair`.
    pub resolved: Option<ResolvedExpectation>,
    pub action: Option<ActionExpectation>,
    pub response: Option<ResponseKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioStep {
    pub step_id: String,
    pub events: Vec<InputEvent>,
    pub fault: Option<Fault>,
    pub consent: Vec<ConsentOp>,
    pub expect: Option<Expectation>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalClause {
    /// Empty means any step.
    pub steps: Vec<String>,
    pub action: Intent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub goal_id: String,
    pub description: Option<String>,
    pub require: Vec<GoalClause>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub scenario_id: String,
    pub description: Option<String>,
    /// Same shape as the session config; paths already resolved.
    pub config_overrides: serde_json::Map<String, serde_json::Value>,
    pub steps: Vec<ScenarioStep>,
    pub goals: Vec<Goal>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: String,
    description: Option<String>,
    config: Option<toml::Spanned<toml::Table>>,
    #[serde(default)]
    steps: Vec<toml::Spanned<RawStep>>,
    #[serde(default)]
    goals: Vec<toml::Spanned<RawGoal>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    id: String,
    at_ms: Option<u64>,
    text: Option<String>,
    token_ms: Option<u64>,
    gap_ms: Option<u64>,
    trailing_ms: Option<u64>,
    events: Option<Vec<InputEvent>>,
    fault: Option<Fault>,
    #[serde(default)]
    consent: Vec<ConsentOp>,
    expect: Option<RawExpect>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpect {
    intent: Option<String>,
    resolved: Option<String>,
    action: Option<String>,
    response: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGoal {
    id: String,
    description: Option<String>,
    #[serde(default)]
    require: Vec<RawClause>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClause {
    #[serde(default)]
    steps: Vec<String>,
    action: String,
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

fn shorthand_events(text: &str, at_ms: u64, token_ms: u64, gap_ms: u64, trailing_ms: u64) -> Vec<InputEvent> {
    let mut events = Vec::new();
    let mut t = at_ms;
    for (i, word) in text.split_whitespace().enumerate() {
        if i > 0 {
            t += gap_ms;
        }
        events.push(InputEvent::token(word, t, t + token_ms));
        t += token_ms;
    }
    events.push(InputEvent::silence(trailing_ms));
    events
}

const PATH_FIELDS: [&str; 3] = ["lexicon", "policy", "templates"];

/// Parses a scenario document. Relative config paths resolve against
/// `base_dir`.
pub fn parse_scenario(source: &str, base_dir: &Path) -> Result<ScenarioScript, Diagnostics> {
    let raw: RawScenario = toml::from_str(source).map_err(|e| {
        let line = e.span().map_or(0, |s| line_of(source, s.start));
        Diagnostics(vec![Diagnostic::parse(line, e.message().to_string())])
    })?;
    let mut diags = Vec::new();

    let mut overrides = serde_json::Map::new();
    if let Some(config) = &raw.config {
        let line = line_of(source, config.span().start);
        let mut value = serde_json::to_value(config.get_ref()).expect("toml tables convert");
        if let Some(obj) = value.as_object_mut() {
            for field in PATH_FIELDS {
                if let Some(serde_json::Value::String(p)) = obj.get(field) {
                    let resolved = base_dir.join(p).to_string_lossy().into_owned();
                    obj.insert(field.to_string(), serde_json::Value::String(resolved));
                }
            }
        }
        let probe = SessionSettings::from_toml_str("").expect("empty settings parse");
        match probe.with_overrides(value.clone()) {
            Ok(s) => {
                if let Err(e) = s.validate() {
                    diags.push(Diagnostic::new(line, DiagnosticKind::Validation, format!("[config] {e}")));
                }
            }
            Err(e) => diags.push(Diagnostic::new(line, DiagnosticKind::Validation, format!("[config] {e}"))),
        }
        if let serde_json::Value::Object(obj) = value {
            overrides = obj;
        }
    }

    if raw.steps.is_empty() {
        diags.push(Diagnostic::new(0, DiagnosticKind::Validation, "scenario has no steps"));
    }
    let mut steps = Vec::new();
    let mut ids: BTreeSet<String> = BTreeSet::new();
    let mut stream_ms = 0u64;
    for spanned in raw.steps {
        let line = line_of(source, spanned.span().start);
        let step = spanned.into_inner();
        let mut err = |msg: String| diags.push(Diagnostic::new(line, DiagnosticKind::Validation, msg));
        if !ids.insert(step.id.clone()) {
            err(format!("duplicate step id {:?}", step.id));
        }
        let shaping = step.token_ms.is_some() || step.gap_ms.is_some() || step.trailing_ms.is_some();
        let events = match (step.text, step.events) {
            (Some(text), None) => {
                let at = step.at_ms.unwrap_or(stream_ms);
                let token_ms = step.token_ms.unwrap_or(DEFAULT_TOKEN_MS);
                if token_ms == 0 {
                    err(format!("step {}: token_ms must be positive", step.id));
                }
                if text.split_whitespace().next().is_none() {
                    err(format!("step {}: text is empty", step.id));
                }
                shorthand_events(
                    &text,
                    at,
                    token_ms.max(1),
                    step.gap_ms.unwrap_or(DEFAULT_GAP_MS),
                    step.trailing_ms.unwrap_or(DEFAULT_TRAILING_MS),
                )
            }
            (None, Some(events)) => {
                if step.at_ms.is_some() || shaping {
                    err(format!("step {}: at_ms/token_ms/gap_ms/trailing_ms apply only to text", step.id));
                }
                events
            }
            (Some(_), Some(_)) => {
                err(format!("step {}: give either text or events, not both", step.id));
                Vec::new()
            }
            (None, None) => {
                err(format!("step {}: needs text or events", step.id));
                Vec::new()
            }
        };
        for event in &events {
            match event {
                InputEvent::Token(t) => {
                    if let Err(e) = t.validate() {
                        err(format!("step {}: {e}", step.id));
                    } else if t.start_ms < stream_ms {
                        err(format!(
                            "step {}: token {:?} starts at {} ms, before the stream position {stream_ms} ms",
                            step.id, t.surface, t.start_ms
                        ));
                    }
                    stream_ms = stream_ms.max(t.end_ms);
                }
                InputEvent::Silence { ms } => stream_ms += ms,
            }
        }
        for op in &step.consent {
            if let Err(e) = op.scope.parse::<ConsentScope>() {
                err(format!("step {}: {e}", step.id));
            }
        }
        let expect = step.expect.map(|raw| {
            let mut intent_field = |name: &str, v: Option<String>| -> Option<Intent> {
                let v = v?;
                match v.parse::<Intent>() {
                    Ok(i) => Some(i),
                    Err(_) => {
                        err(format!("step {}: expect.{name} names unknown intent {v:?}", step.id));
                        None
                    }
                }
            };
            let intent = intent_field("intent", raw.intent);
            let resolved = match raw.resolved.as_deref() {
                None => None,
                Some("repair") => Some(ResolvedExpectation::Repair),
                Some(other) => intent_field("resolved", Some(other.to_string())).map(ResolvedExpectation::Intent),
            };
            let action = match raw.action.as_deref() {
                None => None,
                Some("none") => Some(ActionExpectation::NoAction),
                Some(other) => intent_field("action", Some(other.to_string())).map(ActionExpectation::Executed),
            };
            let response = raw.response.and_then(|r| match r.parse::<ResponseKind>() {
                Ok(k) => Some(k),
                Err(e) => {
                    err(format!("step {}: expect.response: {e}", step.id));
                    None
                }
            });
            Expectation {
                intent,
                resolved,
                action,
                response,
            }
        });
        steps.push(ScenarioStep {
            step_id: step.id,
            events,
            fault: step.fault,
            consent: step.consent,
            expect,
            line,
        });
    }

    let mut goals = Vec::new();
    let mut goal_ids = BTreeSet::new();
    for spanned in raw.goals {
        let line = line_of(source, spanned.span().start);
        let goal = spanned.into_inner();
        let mut err = |msg: String| diags.push(Diagnostic::new(line, DiagnosticKind::Validation, msg));
        if !goal_ids.insert(goal.id.clone()) {
            err(format!("duplicate goal id {:?}", goal.id));
        }
        if goal.require.is_empty() {
            err(format!("goal {} has no require clauses", goal.id));
        }
        let mut require = Vec::new();
        for clause in goal.require {
            for s in &clause.steps {
                if !ids.contains(s) {
                    err(format!("goal {} references missing step {s:?}", goal.id));
                }
            }
            match clause.action.parse::<Intent>() {
                Ok(action) => require.push(GoalClause {
                    steps: clause.steps,
                    action,
                }),
                Err(_) => err(format!("goal {} requires unknown intent {:?}", goal.id, clause.action)),
            }
        }
        goals.push(Goal {
            goal_id: goal.id,
            description: goal.description,
            require,
        });
    }

    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }
    Ok(ScenarioScript {
        scenario_id: raw.id,
        description: raw.description,
        config_overrides: overrides,
        steps,
        goals,
    })
}

pub fn load_scenario(path: &Path) -> Result<ScenarioScript, LoadError> {
    let base = path.parent().unwrap_or(Path::new("."));
    crate::textfmt::load_with(path, |src| parse_scenario(src, base))
}

/// Scenario files under `dir`, sorted by file name.
pub fn scenario_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    Ok(files)
}

/// Out-of-lexicon replacement for the `n`th garbled token. Never looks like
/// a negation frame, so the parse is guaranteed UNKNOWN.
pub fn garble_form(n: u64, lexicon: &Lexicon) -> String {
    let mut k = n;
    loop {
        let form = format!("zq{k}x");
        let normalized = normalize(&form);
        let clean = normalized
            .iter()
            .all(|t| !lexicon.contains(t) && !t.starts_with("nd") && !t.ends_with('i'));
        if clean {
            return form;
        }
        k += 1_000_003;
    }
}

pub fn garble_events(events: &[InputEvent], lexicon: &Lexicon, counter: &mut u64) -> Vec<InputEvent> {
    events
        .iter()
        .map(|e| match e {
            InputEvent::Token(t) => {
                *counter += 1;
                InputEvent::Token(TimedToken {
                    surface: garble_form(*counter, lexicon),
                    ..t.clone()
                })
            }
            other => other.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub step_id: String,
    pub field: String,
    pub expected: String,
    pub actual: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step_id: String,
    /// Turns whose outcomes arrived while this step's events were fed.
    pub turns: Vec<u32>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalResult {
    pub goal_id: String,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdown {
    pub first_turn: u32,
    pub last_turn: u32,
    /// Turn that ended the episode without a breakdown, if any.
    pub closed_by_turn: Option<u32>,
    pub escalated: bool,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub latency_window: LatencyWindow,
    pub steps: Vec<StepResult>,
    pub goals: Vec<GoalResult>,
    pub breakdowns: Vec<Breakdown>,
    pub outcomes: Vec<TurnOutcome>,
    pub audit: Vec<AuditEntry>,
    pub retained: Vec<RetainedArtifact>,
    pub consent: ConsentState,
    pub retention_policy: RetentionPolicy,
    pub decisions_issued: u64,
}

impl ScenarioResult {
    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        self.steps.iter().flat_map(|s| s.checks.iter())
    }

    pub fn all_checks_passed(&self) -> bool {
        self.checks().all(|c| c.passed)
    }
}

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("session-creation error: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid-argument: {0}")]
    InvalidArgument(String),
}

/// Applies a script's overrides to `base`. Referenced files that an
/// override does not replace are shared with `base`.
pub fn scenario_config(script: &ScenarioScript, base: &SessionConfig) -> Result<SessionConfig, ConfigError> {
    if script.config_overrides.is_empty() {
        return Ok(base.clone());
    }
    let settings = base
        .settings
        .with_overrides(serde_json::Value::Object(script.config_overrides.clone()))?;
    settings.validate()?;
    let field = |name: &'static str| -> Option<Result<PathBuf, ConfigError>> {
        script.config_overrides.get(name).map(|v| match v.as_str() {
            Some(s) => Ok(PathBuf::from(s)),
            None => Err(ConfigError::Invalid {
                field: name.into(),
                message: "must be a path".into(),
            }),
        })
    };
    let lexicon = match field("lexicon") {
        Some(p) => Arc::new(Lexicon::load(&p?).map_err(|source| ConfigError::Load { field: "lexicon", source })?),
        None => base.lexicon.clone(),
    };
    let policy = match field("policy") {
        Some(p) => Arc::new(
            crate::governance::PolicyRuleSet::load(&p?).map_err(|source| ConfigError::Load { field: "policy", source })?,
        ),
        None => base.policy.clone(),
    };
    let templates = match field("templates") {
        Some(p) => Arc::new(
            crate::response::TemplateSet::load(&p?).map_err(|source| ConfigError::Load { field: "templates", source })?,
        ),
        None => base.templates.clone(),
    };
    Ok(SessionConfig {
        settings,
        lexicon,
        policy,
        templates,
    })
}

fn check(step_id: &str, field: &str, expected: String, actual: String) -> Check {
    Check {
        step_id: step_id.to_string(),
        field: field.to_string(),
        passed: expected == actual,
        expected,
        actual,
    }
}

fn resolved_intent(o: &TurnOutcome) -> String {
    match &o.resolution {
        crate::dialogue::Resolution::Resolved(r) => r.intent.to_string(),
        crate::dialogue::Resolution::Repair(_) => "repair".to_string(),
    }
}

fn executed_action(o: &TurnOutcome) -> String {
    o.actions
        .iter()
        .find(|a| a.is_success())
        .map_or("none".to_string(), |a| a.intent.to_string())
}

pub fn repair_episodes(outcomes: &[TurnOutcome]) -> Vec<Breakdown> {
    let mut out = Vec::new();
    let mut open: Option<Breakdown> = None;
    for o in outcomes {
        if o.is_breakdown() {
            let ep = open.get_or_insert(Breakdown {
                first_turn: o.turn_index,
                last_turn: o.turn_index,
                closed_by_turn: None,
                escalated: false,
                repaired: false,
            });
            ep.last_turn = o.turn_index;
            if matches!(o.repair, RepairSignal::Escalated { .. }) {
                let mut ep = open.take().expect("just opened");
                ep.escalated = true;
                out.push(ep);
            }
        } else if let Some(mut ep) = open.take() {
            ep.closed_by_turn = Some(o.turn_index);
            ep.repaired = o.actions.iter().any(|a| a.is_success());
            out.push(ep);
        }
    }
    out.extend(open);
    out
}

/// Replays `script` in a fresh session built from `base` plus the script's
/// overrides.
pub fn run_scenario(script: &ScenarioScript, base: &SessionConfig) -> Result<ScenarioResult, EvaluationError> {
    let config = scenario_config(script, base)?;
    let latency_window = config.settings.latency;
    let eot = config.settings.endpoint.end_of_turn_gap_ms;
    let mut session = Session::create(config)?;
    let mut garble_counter = 0u64;
    let mut steps = Vec::new();
    let mut step_outcomes: Vec<Vec<TurnOutcome>> = Vec::new();

    for step in &script.steps {
        for op in &step.consent {
            session.update_consent(&op.scope, op.change)?;
        }
        let events = match step.fault {
            Some(Fault::DropTurn) => Vec::new(),
            Some(Fault::GarbleTokens) => garble_events(&step.events, &session.config().lexicon, &mut garble_counter),
            None => step.events.clone(),
        };
        step_outcomes.push(session.submit_events(&events)?);
    }
    let tail = session.submit_events(&[InputEvent::silence(eot)])?;
    if let Some(last) = step_outcomes.last_mut() {
        last.extend(tail);
    }

    for (step, outs) in script.steps.iter().zip(&step_outcomes) {
        let mut checks = Vec::new();
        if let Some(exp) = &step.expect {
            let first = outs.first();
            let actual = |f: &dyn Fn(&TurnOutcome) -> String| first.map_or("no turn".to_string(), f);
            if let Some(i) = exp.intent {
                checks.push(check(&step.step_id, "intent", i.to_string(), actual(&|o| o.frame.intent.to_string())));
            }
            if let Some(r) = exp.resolved {
                let expected = match r {
                    ResolvedExpectation::Repair => "repair".to_string(),
                    ResolvedExpectation::Intent(i) => i.to_string(),
                };
                checks.push(check(&step.step_id, "resolved", expected, actual(&resolved_intent)));
            }
            if let Some(a) = exp.action {
                let expected = match a {
                    ActionExpectation::NoAction => "none".to_string(),
                    ActionExpectation::Executed(i) => i.to_string(),
                };
                checks.push(check(&step.step_id, "action", expected, actual(&executed_action)));
            }
            if let Some(k) = exp.response {
                checks.push(check(&step.step_id, "response", k.to_string(), actual(&|o| o.response_kind.to_string())));
            }
        }
        steps.push(StepResult {
            step_id: step.step_id.clone(),
            turns: outs.iter().map(|o| o.turn_index).collect(),
            checks,
        });
    }

    let goals = script
        .goals
        .iter()
        .map(|g| GoalResult {
            goal_id: g.goal_id.clone(),
            completed: g.require.iter().all(|clause| {
                script.steps.iter().zip(&step_outcomes).any(|(step, outs)| {
                    (clause.steps.is_empty() || clause.steps.contains(&step.step_id))
                        && outs.iter().any(|o| o.executed(clause.action))
                })
            }),
        })
        .collect();

    let outcomes = session.outcomes().to_vec();
    Ok(ScenarioResult {
        scenario_id: script.scenario_id.clone(),
        latency_window,
        steps,
        goals,
        breakdowns: repair_episodes(&outcomes),
        outcomes,
        audit: session.gatekeeper().audit().entries().to_vec(),
        retained: session.gatekeeper().retained().to_vec(),
        consent: session.gatekeeper().consent().clone(),
        retention_policy: session.gatekeeper().policy().retention_default,
        decisions_issued: session.gatekeeper().decisions_issued(),
    })
}

/// Runs every script; each gets its own session and thread.
pub fn run_suite(scripts: &[ScenarioScript], base: &SessionConfig) -> Vec<Result<ScenarioResult, EvaluationError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = scripts
            .iter()
            .map(|s| scope.spawn(move || run_scenario(s, base)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

/// A fraction with its parts. `value` is absent when the denominator is 0,
/// except where a metric defines an empty case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
    pub value: Option<f64>,
}

impl Ratio {
    pub fn new(numerator: u64, denominator: u64) -> Ratio {
        Ratio {
            numerator,
            denominator,
            value: (denominator > 0).then(|| numerator as f64 / denominator as f64),
        }
    }

    /// Empty case counts as full compliance.
    fn vacuous_one(numerator: u64, denominator: u64) -> Ratio {
        Ratio {
            value: Some(if denominator == 0 { 1.0 } else { numerator as f64 / denominator as f64 }),
            ..Ratio::new(numerator, denominator)
        }
    }

    fn sum<'a>(items: impl Iterator<Item = &'a Ratio>) -> (u64, u64) {
        items.fold((0, 0), |(n, d), r| (n + r.numerator, d + r.denominator))
    }

    pub fn render(&self) -> String {
        match self.value {
            Some(v) => format!("{}/{} = {v:.3}", self.numerator, self.denominator),
            None => format!("{}/{} = undefined", self.numerator, self.denominator),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario_id: String,
    pub tsr: Ratio,
    pub repair_success_rate: Ratio,
    pub latency_conformance: Ratio,
    pub consent_compliance: Ratio,
    pub checks: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tsr: Ratio,
    pub repair_success_rate: Ratio,
    pub latency_conformance: Ratio,
    /// Auditable proxy; not a measure of perceived sovereignty.
    pub consent_compliance: Ratio,
    pub checks: Ratio,
    pub scenarios: Vec<ScenarioMetrics>,
}

pub const CONSENT_PROXY_NOTE: &str =
    "consent_compliance is an auditable proxy (retained artifacts covered by consent and policy); it does not measure perceived sovereignty";

/// A retained artifact is compliant when consent covered it at its turn and
/// the policy permits retention.
pub fn artifact_compliant(a: &RetainedArtifact, consent: &ConsentState, policy: RetentionPolicy) -> bool {
    policy != RetentionPolicy::Never && consent.is_granted(&a.kind.scope(), a.turn_index)
}

pub fn latency_conformance(outcomes: &[TurnOutcome], window: &LatencyWindow) -> Ratio {
    let within = outcomes.iter().filter(|o| window.contains(o.response_gap_ms)).count() as u64;
    Ratio::new(within, outcomes.len() as u64)
}

pub fn consent_compliance(retained: &[RetainedArtifact], consent: &ConsentState, policy: RetentionPolicy) -> Ratio {
    let ok = retained.iter().filter(|a| artifact_compliant(a, consent, policy)).count() as u64;
    Ratio::vacuous_one(ok, retained.len() as u64)
}

pub fn scenario_metrics(r: &ScenarioResult) -> ScenarioMetrics {
    let checks: Vec<_> = r.checks().collect();
    ScenarioMetrics {
        scenario_id: r.scenario_id.clone(),
        tsr: Ratio::new(r.goals.iter().filter(|g| g.completed).count() as u64, r.goals.len() as u64),
        repair_success_rate: Ratio::new(
            r.breakdowns.iter().filter(|b| b.repaired).count() as u64,
            r.breakdowns.len() as u64,
        ),
        latency_conformance: latency_conformance(&r.outcomes, &r.latency_window),
        consent_compliance: consent_compliance(&r.retained, &r.consent, r.retention_policy),
        checks: Ratio::new(checks.iter().filter(|c| c.passed).count() as u64, checks.len() as u64),
    }
}

pub fn compute_metrics(results: &[ScenarioResult]) -> Result<MetricsReport, EvaluationError> {
    if results.is_empty() {
        return Err(EvaluationError::InvalidArgument("no scenario results".into()));
    }
    let scenarios: Vec<ScenarioMetrics> = results.iter().map(scenario_metrics).collect();
    let total = |f: fn(&ScenarioMetrics) -> &Ratio| Ratio::sum(scenarios.iter().map(f));
    let (tn, td) = total(|s| &s.tsr);
    let (rn, rd) = total(|s| &s.repair_success_rate);
    let (ln, ld) = total(|s| &s.latency_conformance);
    let (cn, cd) = total(|s| &s.consent_compliance);
    let (kn, kd) = total(|s| &s.checks);
    Ok(MetricsReport {
        tsr: Ratio::new(tn, td),
        repair_success_rate: Ratio::new(rn, rd),
        latency_conformance: Ratio::new(ln, ld),
        consent_compliance: Ratio::vacuous_one(cn, cd),
        checks: Ratio::new(kn, kd),
        scenarios,
    })
}

/// Session-level metrics for a live session. Goals do not exist outside a
/// script, so task success is not reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub turns: u64,
    pub repair_success_rate: Ratio,
    pub latency_conformance: Ratio,
    pub consent_compliance: Ratio,
    pub note: String,
}

pub fn live_metrics(session: &Session) -> LiveMetrics {
    let outcomes = session.outcomes();
    let episodes = repair_episodes(outcomes);
    let g = session.gatekeeper();
    LiveMetrics {
        turns: outcomes.len() as u64,
        repair_success_rate: Ratio::new(
            episodes.iter().filter(|b| b.repaired).count() as u64,
            episodes.len() as u64,
        ),
        latency_conformance: latency_conformance(outcomes, &session.config().settings.latency),
        consent_compliance: consent_compliance(g.retained(), g.consent(), g.policy().retention_default),
        note: CONSENT_PROXY_NOTE.to_string(),
    }
}

impl MetricsReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>7} {:>9} {:>9} {:>9} {:>8}",
            "scenario", "goals", "repaired", "latency", "consent*", "checks"
        );
        let frac = |r: &Ratio| {
            if r.denominator == 0 {
                "-".to_string()
            } else {
                format!("{}/{}", r.numerator, r.denominator)
            }
        };
        for s in &self.scenarios {
            let _ = writeln!(
                out,
                "{:<28} {:>7} {:>9} {:>9} {:>9} {:>8}",
                s.scenario_id,
                frac(&s.tsr),
                frac(&s.repair_success_rate),
                frac(&s.latency_conformance),
                format!("{:.3}", s.consent_compliance.value.unwrap_or(1.0)),
                frac(&s.checks),
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "task success rate     {}", self.tsr.render());
        let _ = writeln!(out, "repair success rate   {}", self.repair_success_rate.render());
        let _ = writeln!(out, "latency conformance   {}", self.latency_conformance.render());
        let _ = writeln!(out, "consent compliance*   {}", self.consent_compliance.render());
        let _ = writeln!(out, "expectation checks    {}", self.checks.render());
        let _ = writeln!(out, "* {CONSENT_PROXY_NOTE}");
        out
    }

    /// Canonical machine-readable form.
    pub fn render_machine(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.insert("consent_compliance_note".into(), serde_json::Value::String(CONSENT_PROXY_NOTE.into()));
        }
        crate::canonical::to_canonical_pretty(&value)
    }
}
