mod common;

use ayvu_core::governance::{ArtifactKind, AuditSubject, ConsentChange, ConsentScope, Verdict};
use ayvu_core::model::{agent, Intent, Payload, PayloadKind};
use ayvu_core::response::{Delivery, ResponseKind};
use ayvu_core::trace::verify_pipeline;
use ayvu_core::{InputEvent, Session, SessionConfig, SessionError};
use common::*;
use proptest::prelude::*;

#[test]
fn fresh_session_is_empty() {
    let s = session();
    assert_eq!(s.clock_ms(), 0);
    assert!(s.dialogue_state().focus().is_empty());
    assert!(s.dialogue_state().history().is_empty());
    assert!(s.outcomes().is_empty());
    assert_eq!(s.next_turn_index(), 1);
}

#[test]
fn creation_fails_on_missing_lexicon_file() {
    let mut settings = base_config().settings;
    settings.lexicon = Some("/nonexistent/lexicon.txt".into());
    let err = SessionConfig::from_settings(settings, std::path::Path::new("/")).unwrap_err();
    assert_eq!(err.field(), Some("lexicon"));
    assert!(err.to_string().contains("lexicon"));
}

#[test]
fn creation_fails_on_inverted_latency_window() {
    let mut cfg = base_config();
    cfg.settings.latency.floor_ms = 2000;
    cfg.settings.latency.ceiling_ms = 2000;
    let err = Session::create(cfg).unwrap_err();
    assert!(matches!(err, SessionError::Config(_)));
    assert!(err.to_string().contains("latency"));
}

#[test]
fn table1_turns_end_to_end() {
    let mut s = session();
    let t1 = s.submit_events(&say("Che ahenduse purahéi", 0, 1500)).unwrap();
    assert_eq!(t1.len(), 1);
    assert!(t1[0].executed(Intent::PlayMusic));
    assert_eq!(t1[0].delivered_text.as_deref(), Some("Oĩ porã"));

    let t2 = s.submit_events(&say("Nda che gustái", 5000, 1500)).unwrap();
    assert_eq!(t2.len(), 1);
    assert_eq!(t2[0].frame.intent, Intent::Rejection);
    assert_eq!(t2[0].actions.len(), 1);
    assert_eq!(t2[0].actions[0].intent, Intent::Skip);
    assert!(t2[0].actions[0].effects.contains("NEXT_TRACK"));
}

#[test]
fn empty_event_list_yields_nothing() {
    let mut s = session();
    assert!(s.submit_events(&[]).unwrap().is_empty());
    assert_eq!(s.clock_ms(), 0);
}

#[test]
fn trace_of_turn_one_follows_table1_order() {
    let mut s = session();
    s.submit_events(&say("Che ahenduse purahéi", 0, 1500)).unwrap();
    let t = s.get_trace(1).unwrap();
    let agents: Vec<&str> = t.steps().iter().map(|st| st.agent.as_str()).collect();
    assert_eq!(
        agents,
        [
            agent::SPEECH,
            agent::UNDERSTANDING,
            agent::CONVERSATION_STATE,
            agent::GOVERNANCE,
            agent::MEDIA,
            agent::RESPONSE,
            agent::GOVERNANCE,
            agent::RESPONSE
        ]
    );
    assert_eq!(t.steps()[3].verdict, Some(Verdict::Allow));
    assert_eq!(t.steps()[6].verdict, Some(Verdict::Allow));
    verify_pipeline(&t).unwrap();
}

#[test]
fn unknown_turn_is_not_found() {
    let mut s = session();
    s.submit_events(&say("Che ahenduse purahéi", 0, 1500)).unwrap();
    s.submit_events(&say("Nda che gustái", 5000, 1500)).unwrap();
    let err = s.get_trace(99).unwrap_err();
    assert!(matches!(err, SessionError::TurnNotFound(99)));
    assert!(err.to_string().starts_with("not-found"));
}

#[test]
fn repair_turn_prompts_and_acts_on_nothing() {
    let mut s = session();
    let out = s.submit_events(&say("mba'e zzz", 0, 1500)).unwrap();
    assert_eq!(out[0].response_kind, ResponseKind::RepairPrompt);
    assert!(out[0].actions.is_empty());
    let t = s.get_trace(1).unwrap();
    assert!(t.steps().iter().all(|st| st.kind_out != PayloadKind::ActionResult));
    assert!(t.steps().iter().any(|st| st.summary.contains("repair_prompt")));
    verify_pipeline(&t).unwrap();
}

#[test]
fn disordered_events_leave_session_untouched() {
    let mut s = session();
    s.submit_events(&say("Che ahenduse purahéi", 0, 1500)).unwrap();
    let before = s.state_snapshot();
    let mut bad = say("Nda che gustái", 5000, 0);
    bad.push(InputEvent::token("late", 100, 200));
    let err = s.submit_events(&bad).unwrap_err();
    assert!(matches!(err, SessionError::Endpoint(_)));
    assert_eq!(s.state_snapshot(), before);
    // Still usable afterwards.
    assert_eq!(s.submit_events(&say("Nda che gustái", 5000, 1500)).unwrap().len(), 1);
}

#[test]
fn consent_grant_applies_from_next_turn() {
    let mut s = consent_session();
    for (i, at) in [0u64, 5000].into_iter().enumerate() {
        let out = s.submit_events(&say("Oĩ porã", at, 1500)).unwrap();
        assert_eq!(out[0].turn_index, i as u32 + 1);
    }
    // Turns 1 and 2 are done; a grant now takes effect at turn 3.
    let ack = s.update_consent("store_transcript", ConsentChange::Grant).unwrap();
    assert_eq!(ack.effective_from_turn, 3);
    let out = s.submit_events(&say("Oĩ porã", 10_000, 1500)).unwrap();
    assert_eq!(out[0].turn_index, 3);
    let kept: Vec<_> = s.gatekeeper().retained().iter().map(|a| (a.turn_index, a.kind)).collect();
    assert_eq!(kept, [(3, ArtifactKind::Transcript)]);
}

#[test]
fn store_audio_grant_at_turn_three_is_seen_at_turn_four() {
    let mut s = consent_session();
    for at in [0u64, 5000, 10_000] {
        s.submit_events(&say("Oĩ porã", at, 1500)).unwrap();
    }
    s.update_consent("store_audio", ConsentChange::Grant).unwrap();
    let out = s.submit_events(&say("Oĩ porã", 15_000, 1500)).unwrap();
    assert_eq!(out[0].turn_index, 4);
    assert!(out[0].retention.iter().any(|r| r.artifact == ArtifactKind::Audio && r.decision.keeps()));
    assert!(s.gatekeeper().consent().is_granted(&ConsentScope::StoreAudio, 4));
    assert!(!s.gatekeeper().consent().is_granted(&ConsentScope::StoreAudio, 3));
}

#[test]
fn revoking_never_granted_scope_still_audits() {
    let mut s = session();
    let before = s.gatekeeper().audit().len();
    s.update_consent("category:music", ConsentChange::Revoke).unwrap();
    assert!(!s.gatekeeper().consent().is_granted(&"category:music".parse().unwrap(), 1));
    let audit = s.gatekeeper().audit().entries();
    assert_eq!(audit.len(), before + 1);
    assert_eq!(audit.last().unwrap().subject, AuditSubject::Consent);
}

#[test]
fn unknown_scope_is_invalid() {
    let mut s = session();
    let err = s.update_consent("telemetry_x", ConsentChange::Grant).unwrap_err();
    assert!(matches!(err, SessionError::InvalidScope(_)));
    assert!(err.to_string().starts_with("invalid-scope"));
}

#[test]
fn consent_update_travels_on_the_bus() {
    let mut s = session();
    s.update_consent("store_audio", ConsentChange::Grant).unwrap();
    let m = s.messages().last().unwrap();
    assert_eq!(m.destination_agent, agent::GOVERNANCE);
    assert!(matches!(&m.payload, Payload::PolicyQuery(q) if q.subject.contains("store_audio")));
}

#[test]
fn ask_then_grant_changes_the_next_decision() {
    let mut s = consent_session();
    let first = s.submit_events(&say("abrir pestaña noticias", 0, 1500)).unwrap();
    assert_eq!(first[0].action_verdict, Some(Verdict::Ask));
    assert_eq!(first[0].response_kind, ResponseKind::ConsentPrompt);
    s.update_consent("category:browsing", ConsentChange::Grant).unwrap();
    let second = s.submit_events(&say("abrir pestaña noticias", 5000, 1500)).unwrap();
    assert_eq!(second[0].action_verdict, Some(Verdict::Allow));
    assert!(second[0].executed(Intent::OpenTab));
    s.update_consent("category:browsing", ConsentChange::Revoke).unwrap();
    let third = s.submit_events(&say("abrir pestaña noticias", 10_000, 1500)).unwrap();
    assert_eq!(third[0].action_verdict, Some(Verdict::Ask));
}

#[test]
fn barge_in_cancels_pending_delivery() {
    let mut s = session();
    // Last token ends at 1100: completion at 2300, delivery at 2470.
    let mut events = say("Che ahenduse purahéi", 0, 1200);
    events.push(InputEvent::token("nda", 2350, 2600));
    events.push(InputEvent::silence(1500));
    let out = s.submit_events(&events).unwrap();
    assert_eq!(out.len(), 2);
    assert!(matches!(out[0].delivery, Delivery::Cancelled { by_token_at_ms: 2350, .. }));
    assert_eq!(out[0].delivered_text, None);
    let last = out[0].trace.steps().last().unwrap();
    assert!(last.summary.starts_with("cancelled:"));
    // The action still happened; only the spoken response was cut off.
    assert!(out[0].executed(Intent::PlayMusic));
}

#[test]
fn token_after_delivery_does_not_cancel() {
    let mut s = session();
    let mut events = say("Che ahenduse purahéi", 0, 1200);
    events.push(InputEvent::token("nda", 2500, 2700));
    events.push(InputEvent::silence(1500));
    let out = s.submit_events(&events).unwrap();
    assert!(matches!(out[0].delivery, Delivery::Spoken { .. }));
}

#[test]
fn denied_action_still_answers() {
    let mut s = session();
    let out = s.submit_events(&say("abrir pestaña noticias", 0, 1500)).unwrap();
    assert_eq!(out[0].action_verdict, Some(Verdict::Deny));
    assert!(out[0].actions.is_empty());
    assert_eq!(out[0].response_kind, ResponseKind::Denial);
    verify_pipeline(&out[0].trace).unwrap();
}

#[test]
fn gap_equals_cost_sum() {
    let mut s = session();
    let costs = s.config().settings.costs.clone();
    for (i, text) in ["Che ahenduse purahéi", "Nda che gustái", "zzz", "abrir pestaña"].iter().enumerate() {
        let out = s.submit_events(&say(text, i as u64 * 5000, 1500)).unwrap();
        let sum: u64 = out[0].trace.steps().iter().map(|st| costs.get(&st.agent).copied().unwrap_or(0)).sum();
        assert_eq!(out[0].response_gap_ms, sum, "{text}");
    }
}

#[test]
fn snapshot_reports_core_fields() {
    let mut s = session();
    s.submit_events(&say("Che ahenduse purahéi", 0, 1500)).unwrap();
    let snap = s.state_snapshot();
    for key in ["clock_ms", "next_turn_index", "turns", "outcomes", "dialogue", "consent", "agents", "retained", "audit_entries"] {
        assert!(snap.get(key).is_some(), "{key}");
    }
    assert_eq!(snap["next_turn_index"], 2);
}

fn arb_events() -> impl Strategy<Value = Vec<InputEvent>> {
    let word = prop::sample::select(vec!["che", "ahenduse", "purahéi", "nda", "gustái", "abrir", "pestaña", "cerrar", "xyz"]);
    prop::collection::vec((word, 1u64..400, 0u64..2500), 0..25).prop_map(|spec| {
        let mut t = 0;
        let mut out = Vec::new();
        for (w, dur, gap) in spec {
            t += gap;
            out.push(InputEvent::token(w, t, t + dur));
            t += dur;
        }
        out.push(InputEvent::silence(1500));
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_trace_satisfies_pipeline_grammar(events in arb_events()) {
        let mut s = session();
        let out = s.submit_events(&events).unwrap();
        for o in &out {
            prop_assert!(verify_pipeline(&o.trace).is_ok(), "{:?}", verify_pipeline(&o.trace));
        }
    }

    #[test]
    fn identical_streams_give_identical_outcomes(events in arb_events()) {
        let a = session().submit_events(&events).unwrap();
        let b = session().submit_events(&events).unwrap();
        prop_assert_eq!(
            ayvu_core::canonical::to_canonical_string(&a),
            ayvu_core::canonical::to_canonical_string(&b)
        );
    }

    #[test]
    fn chunking_does_not_change_outcomes(events in arb_events(), cut in 0usize..30) {
        let whole = session().submit_events(&events).unwrap();
        let mut s = session();
        let cut = cut.min(events.len());
        let mut parts = s.submit_events(&events[..cut]).unwrap();
        parts.extend(s.submit_events(&events[cut..]).unwrap());
        // Batch boundaries flush scheduled deliveries, so only the
        // understanding side is compared.
        let key = |o: &ayvu_core::TurnOutcome| (o.turn_index, o.utterance.clone(), o.frame.intent, o.actions.clone());
        prop_assert_eq!(whole.iter().map(key).collect::<Vec<_>>(), parts.iter().map(key).collect::<Vec<_>>());
    }
}
