#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ayvu_core::evaluation::{load_scenario, run_scenario, scenario_files, ScenarioResult, ScenarioScript};
use ayvu_core::trace::TraceRecord;
use ayvu_core::SessionConfig;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn base_config() -> SessionConfig {
    SessionConfig::load(&data_dir().join("config.toml")).expect("shipped config loads")
}

pub fn shipped_scripts() -> Vec<ScenarioScript> {
    scenario_files(&data_dir().join("scenarios"))
        .expect("scenario dir readable")
        .iter()
        .map(|p| load_scenario(p).expect("shipped scenario parses"))
        .collect()
}

pub fn script(id: &str) -> ScenarioScript {
    shipped_scripts()
        .into_iter()
        .find(|s| s.scenario_id == id)
        .unwrap_or_else(|| panic!("no shipped scenario {id}"))
}

pub fn run(id: &str) -> ScenarioResult {
    run_scenario(&script(id), &base_config()).expect("scenario runs")
}

pub fn traces(result: &ScenarioResult) -> Vec<TraceRecord> {
    result.outcomes.iter().map(|o| o.trace.clone()).collect()
}

pub const GOLDEN_TABLE1: &str = "golden/table1_golden.trace.json";
pub mod fuzz;

/// Tokens of `text` from `at_ms`, 300 ms each with 100 ms gaps, then
/// `trailing_ms` of silence.
pub fn say(text: &str, at_ms: u64, trailing_ms: u64) -> Vec<ayvu_core::InputEvent> {
    let mut t = at_ms;
    let mut out = Vec::new();
    for w in text.split_whitespace() {
        out.push(ayvu_core::InputEvent::token(w, t, t + 300));
        t += 400;
    }
    if trailing_ms > 0 {
        out.push(ayvu_core::InputEvent::silence(trailing_ms));
    }
    out
}

pub fn session() -> ayvu_core::Session {
    ayvu_core::Session::create(base_config()).expect("session")
}

pub fn consent_session() -> ayvu_core::Session {
    let mut cfg = base_config();
    cfg.policy = std::sync::Arc::new(
        ayvu_core::governance::PolicyRuleSet::load(&data_dir().join("policy-consent.txt")).unwrap(),
    );
    ayvu_core::Session::create(cfg).expect("session")
}
