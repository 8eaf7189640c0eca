mod common;

use ayvu_core::governance::{
    decide_retention, evaluate_action, evaluate_response, ArtifactKind, ConsentChange, ConsentScope, ConsentState,
    DecisionContext, PolicyRuleSet, RetentionDecision, RetentionPolicy, Verdict,
};
use ayvu_core::model::Intent;
use ayvu_core::response::ResponseKind;
use ayvu_core::textfmt::DiagnosticKind;
use common::*;
use proptest::prelude::*;

const CTX: DecisionContext<'static> = DecisionContext {
    correlation_id: "turn-1",
    turn_index: 1,
    at_ms: 0,
};

fn policy(src: &str) -> PolicyRuleSet {
    PolicyRuleSet::parse(src).unwrap()
}

#[test]
fn empty_document_takes_defaults() {
    let p = policy("");
    assert!(p.action_rules.is_empty() && p.response_rules.is_empty());
    assert_eq!(p.retention_default, RetentionPolicy::Never);
    assert_eq!(p.default_verdict, Verdict::Deny);
}

#[test]
fn duplicate_rule_id_names_both_lines() {
    let err = PolicyRuleSet::parse("[action_rules]\nr1 music allow\n\nr1 browsing deny\n").unwrap_err();
    assert!(err.has_kind(DiagnosticKind::PolicyConflict));
    let d = err.iter().find(|d| d.kind == DiagnosticKind::PolicyConflict).unwrap();
    assert!(d.message.contains("r1"));
    assert!(d.message.contains('2') && d.message.contains('4'), "{}", d.message);
}

#[test]
fn unknown_verdict_is_parse_error() {
    let err = PolicyRuleSet::parse("[action_rules]\nr1 music maybe\n").unwrap_err();
    assert_eq!(err.first().kind, DiagnosticKind::Parse);
    assert_eq!(err.first().line, 2);
}

#[test]
fn every_violation_is_reported() {
    let err = PolicyRuleSet::parse("[action_rules]\nr1 music maybe\nr2 browsing nope\n[default]\nask\n").unwrap_err();
    assert!(err.iter().count() >= 3);
}

#[test]
fn music_rule_is_loaded() {
    let p = PolicyRuleSet::load(&data_dir().join("policy.txt")).unwrap();
    assert!(p.has_rule("allow_music"));
    let d = evaluate_action(&p, &ConsentState::default(), Intent::PlayMusic, "music", &CTX);
    assert_eq!(d.verdict, Verdict::Allow);
    assert_eq!(d.rule_id, "allow_music");
    assert!(d.rationale.contains("music"));
}

#[test]
fn unmatched_category_falls_to_default() {
    let p = PolicyRuleSet::load(&data_dir().join("policy.txt")).unwrap();
    let d = evaluate_action(&p, &ConsentState::default(), Intent::OpenTab, "browsing", &CTX);
    assert_eq!(d.verdict, Verdict::Deny);
    assert_eq!(d.rule_id, "default");
}

/// Oracle for one action rule (or none) against one consent state.
fn expected_action(rule: Option<Verdict>, default: Verdict, granted: bool) -> Verdict {
    match rule {
        None => default,
        Some(Verdict::Ask) if granted => Verdict::Allow,
        Some(v) => v,
    }
}

#[test]
fn action_truth_table() {
    for rule in [None, Some(Verdict::Allow), Some(Verdict::Deny), Some(Verdict::Ask)] {
        for default in [Verdict::Allow, Verdict::Deny] {
            for consent in [None, Some(ConsentChange::Grant), Some(ConsentChange::Revoke)] {
                let mut src = String::from("[action_rules]\n");
                if let Some(v) = rule {
                    src.push_str(&format!("r music {v}\n"));
                }
                src.push_str(&format!("[default]\n{default}\n"));
                let p = policy(&src);
                let mut c = ConsentState::default();
                if let Some(ch) = consent {
                    c.record(ConsentScope::Category("music".into()), ch, 1);
                }
                let granted = consent == Some(ConsentChange::Grant);
                let d = evaluate_action(&p, &c, Intent::PlayMusic, "music", &CTX);
                assert_eq!(d.verdict, expected_action(rule, default, granted), "{rule:?} {default} {consent:?}");
                assert!(!d.rationale.is_empty());
                assert!(d.rule_id == "default" || p.has_rule(&d.rule_id));
            }
        }
    }
}

#[test]
fn response_defaults() {
    let p = policy("");
    for kind in [ResponseKind::Confirmation, ResponseKind::Denial, ResponseKind::RepairPrompt] {
        assert_eq!(evaluate_response(&p, kind, &CTX).verdict, Verdict::Allow);
    }
    assert_eq!(evaluate_response(&p, ResponseKind::ConsentPrompt, &CTX).verdict, Verdict::Deny);
    let deny = policy("[response_rules]\nquiet confirmation deny\n");
    let d = evaluate_response(&deny, ResponseKind::Confirmation, &CTX);
    assert_eq!((d.verdict, d.rule_id.as_str()), (Verdict::Deny, "quiet"));
}

#[test]
fn ask_is_not_a_response_verdict() {
    assert!(PolicyRuleSet::parse("[response_rules]\nr confirmation ask\n").is_err());
}

#[test]
fn retention_truth_table() {
    for artifact in [ArtifactKind::Audio, ArtifactKind::Transcript] {
        for (word, retention) in [
            ("never", RetentionPolicy::Never),
            ("session", RetentionPolicy::Session),
            ("persistent", RetentionPolicy::Persistent),
        ] {
            for granted in [false, true] {
                let p = policy(&format!("[retention]\n{word}\n"));
                let mut c = ConsentState::default();
                if granted {
                    c.record(artifact.scope(), ConsentChange::Grant, 1);
                }
                let expected = match (granted, retention) {
                    (false, _) | (_, RetentionPolicy::Never) => RetentionDecision::Discard,
                    (true, RetentionPolicy::Session) => RetentionDecision::KeepSession,
                    (true, RetentionPolicy::Persistent) => RetentionDecision::KeepPersistent,
                };
                assert_eq!(decide_retention(&p, &c, artifact, 1), expected, "{artifact:?} {word} {granted}");
            }
        }
    }
}

#[test]
fn granting_the_other_scope_does_not_leak() {
    let p = policy("[retention]\npersistent\n");
    let mut c = ConsentState::default();
    c.record(ConsentScope::StoreTranscript, ConsentChange::Grant, 1);
    assert_eq!(decide_retention(&p, &c, ArtifactKind::Audio, 5), RetentionDecision::Discard);
}

#[test]
fn scopes_parse() {
    for s in ["store_audio", "store_transcript", "category:music"] {
        let scope: ConsentScope = s.parse().unwrap();
        assert_eq!(scope.to_string(), s);
    }
    for bad in ["telemetry_x", "category:", ""] {
        assert!(bad.parse::<ConsentScope>().is_err(), "{bad}");
    }
}

#[test]
fn audit_counts_every_decision() {
    for id in ["table1_golden", "consent_ask", "denied_browser", "repair_unrepaired"] {
        let r = run(id);
        let decisions = r.audit.iter().filter(|e| e.decision.is_some()).count() as u64;
        assert_eq!(decisions, r.decisions_issued, "{id}");
        for (i, e) in r.audit.iter().enumerate() {
            assert_eq!(e.seq, i as u64 + 1);
        }
    }
}

fn arb_changes() -> impl Strategy<Value = Vec<(bool, u32)>> {
    prop::collection::vec((any::<bool>(), 1u32..20), 0..12)
}

proptest! {
    /// Effective status at turn n is the last change with turn <= n in
    /// arrival order among the latest turn.
    #[test]
    fn consent_latest_change_wins(changes in arb_changes(), n in 1u32..25) {
        let mut c = ConsentState::default();
        for (grant, turn) in &changes {
            let ch = if *grant { ConsentChange::Grant } else { ConsentChange::Revoke };
            c.record(ConsentScope::StoreAudio, ch, *turn);
        }
        let best = changes.iter().filter(|(_, t)| *t <= n).map(|(_, t)| *t).max();
        let expected = best.is_some_and(|bt| changes.iter().rev().find(|(_, t)| *t == bt).unwrap().0);
        prop_assert_eq!(c.is_granted(&ConsentScope::StoreAudio, n), expected);
    }

    /// Changes later than n never affect status at n.
    #[test]
    fn consent_is_monotone_by_turn(changes in arb_changes(), later in arb_changes(), n in 1u32..20) {
        let mut a = ConsentState::default();
        let mut b = ConsentState::default();
        for (grant, turn) in &changes {
            let ch = if *grant { ConsentChange::Grant } else { ConsentChange::Revoke };
            a.record(ConsentScope::StoreAudio, ch, *turn);
            b.record(ConsentScope::StoreAudio, ch, *turn);
        }
        for (grant, turn) in &later {
            let ch = if *grant { ConsentChange::Grant } else { ConsentChange::Revoke };
            b.record(ConsentScope::StoreAudio, ch, n + *turn);
        }
        prop_assert_eq!(a.is_granted(&ConsentScope::StoreAudio, n), b.is_granted(&ConsentScope::StoreAudio, n));
    }
}
