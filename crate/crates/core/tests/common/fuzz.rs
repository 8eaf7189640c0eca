//! Seeded random scenarios and policies for property checks.

use std::sync::Arc;

use ayvu_core::evaluation::{ConsentOp, Fault, ScenarioScript, ScenarioStep};
use ayvu_core::governance::{ConsentChange, PolicyRuleSet, RetentionPolicy};
use ayvu_core::model::{agent, InputEvent};
use ayvu_core::SessionConfig;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const PHRASES: &[&str] = &[
    "Che ahenduse purahéi",
    "Nda che gustái",
    "abrir pestaña noticias",
    "abrir pestaña",
    "cerrar pestaña",
    "parar música",
    "Oĩ porã",
    "che purahéi nda",
    "gustái",
];

pub const WORDS: &[&str] = &[
    "che", "ahenduse", "purahéi", "nda", "gustái", "abrir", "pestaña", "cerrar", "parar", "música", "noticias", "oĩ",
    "porã", "mba'e", "ko'ág̃a",
];

pub const SCOPES: &[&str] = &["store_audio", "store_transcript", "category:music", "category:browsing"];

/// One fuzzed case: the policy source it was built from plus a ready
/// config and script.
pub struct FuzzCase {
    pub policy_source: String,
    pub retention: RetentionPolicy,
    pub config: SessionConfig,
    pub script: ScenarioScript,
}

fn verdict(rng: &mut ChaCha8Rng) -> &'static str {
    ["allow", "deny", "ask"].choose(rng).copied().unwrap()
}

pub fn random_policy(rng: &mut ChaCha8Rng) -> (String, RetentionPolicy) {
    let mut src = String::from("[action_rules]\n");
    if rng.gen_bool(0.7) {
        src.push_str(&format!("r_music music {}\n", verdict(rng)));
    }
    if rng.gen_bool(0.7) {
        src.push_str(&format!("r_browsing browsing {}\n", verdict(rng)));
    }
    if rng.gen_bool(0.2) {
        src.push_str(&format!("r_any * {}\n", verdict(rng)));
    }
    src.push_str("[response_rules]\n");
    for (id, kind) in [("r_consent", "consent_prompt"), ("r_denial", "denial"), ("r_confirm", "confirmation")] {
        if rng.gen_bool(0.3) {
            let v = if rng.gen_bool(0.5) { "allow" } else { "deny" };
            src.push_str(&format!("{id} {kind} {v}\n"));
        }
    }
    let (word, retention) = [
        ("never", RetentionPolicy::Never),
        ("session", RetentionPolicy::Session),
        ("persistent", RetentionPolicy::Persistent),
    ]
    .choose(rng)
    .copied()
    .unwrap();
    src.push_str(&format!("[retention]\n{word}\n"));
    src.push_str(&format!("[default]\n{}\n", if rng.gen_bool(0.5) { "allow" } else { "deny" }));
    (src, retention)
}

fn text(rng: &mut ChaCha8Rng) -> Vec<String> {
    if rng.gen_bool(0.7) {
        PHRASES.choose(rng).unwrap().split_whitespace().map(str::to_string).collect()
    } else {
        (0..rng.gen_range(1..=4)).map(|_| WORDS.choose(rng).unwrap().to_string()).collect()
    }
}

/// Builds a script whose steps are sequential in time. Gaps occasionally
/// exceed the end-of-turn threshold (splitting a step into two turns) and
/// step starts occasionally land before the previous delivery (barge-in).
pub fn random_script(rng: &mut ChaCha8Rng, id: &str, eot: u64) -> ScenarioScript {
    let mut cursor = 0u64;
    let mut steps = Vec::new();
    for n in 0..rng.gen_range(1..=6) {
        let mut events = Vec::new();
        for (i, w) in text(rng).iter().enumerate() {
            if i > 0 {
                cursor += *[50, 100, 300, 700, eot + 50].choose(rng).unwrap();
            }
            let dur = rng.gen_range(100..400);
            events.push(InputEvent::token(w, cursor, cursor + dur));
            cursor += dur;
        }
        let trailing = *[0, 400, eot, eot + 500].choose(rng).unwrap();
        if trailing > 0 {
            events.push(InputEvent::silence(trailing));
            cursor += trailing;
        }
        let consent = (0..rng.gen_range(0..=2))
            .map(|_| ConsentOp {
                scope: SCOPES.choose(rng).unwrap().to_string(),
                change: if rng.gen_bool(0.6) { ConsentChange::Grant } else { ConsentChange::Revoke },
            })
            .collect();
        let fault = match rng.gen_range(0..20) {
            0 | 1 => Some(Fault::GarbleTokens),
            2 => Some(Fault::DropTurn),
            _ => None,
        };
        steps.push(ScenarioStep {
            step_id: format!("s{n}"),
            events,
            fault,
            consent,
            expect: None,
            line: 0,
        });
        cursor += rng.gen_range(0..3000);
    }
    ScenarioScript {
        scenario_id: id.to_string(),
        description: None,
        config_overrides: Default::default(),
        steps,
        goals: Vec::new(),
    }
}

pub fn random_case(rng: &mut ChaCha8Rng, base: &SessionConfig, n: usize) -> FuzzCase {
    let (policy_source, retention) = random_policy(rng);
    let policy = PolicyRuleSet::parse(&policy_source).expect("generated policy is valid");
    let mut settings = base.settings.clone();
    settings.costs.clear();
    for a in agent::BUILT_IN {
        if rng.gen_bool(0.8) {
            settings.costs.insert(a.to_string(), rng.gen_range(0..60));
        }
    }
    settings.max_repair_attempts = rng.gen_range(1..=3);
    settings.latency.floor_ms = rng.gen_range(0..150);
    settings.latency.ceiling_ms = settings.latency.floor_ms + rng.gen_range(1..400);
    settings.fixtures.tabs = (0..rng.gen_range(0..3)).map(|i| format!("site-{i}")).collect();
    let eot = settings.endpoint.end_of_turn_gap_ms;
    settings.validate().expect("generated settings are valid");
    let config = SessionConfig {
        settings,
        lexicon: base.lexicon.clone(),
        policy: Arc::new(policy),
        templates: base.templates.clone(),
    };
    FuzzCase {
        policy_source,
        retention,
        config,
        script: random_script(rng, &format!("fuzz-{n}"), eot),
    }
}
