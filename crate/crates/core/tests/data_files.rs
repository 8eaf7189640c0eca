mod common;

use ayvu_core::governance::{PolicyRuleSet, RetentionPolicy};
use ayvu_core::response::{ResponseKind, TemplateSet};
use ayvu_core::understanding::Lexicon;
use common::*;

#[test]
fn shipped_files_load() {
    Lexicon::load(&data_dir().join("lexicon.txt")).unwrap();
    let p = PolicyRuleSet::load(&data_dir().join("policy.txt")).unwrap();
    assert_eq!(p.retention_default, RetentionPolicy::Never);
    PolicyRuleSet::load(&data_dir().join("policy-consent.txt")).unwrap();
    let t = TemplateSet::load(&data_dir().join("templates.txt")).unwrap();
    for kind in ResponseKind::ALL {
        assert_eq!(t.first_of(kind).kind, kind);
    }
    assert_eq!(shipped_scripts().len(), 6);
}

#[test]
fn only_attested_text_ships_unmarked() {
    let t = TemplateSet::load(&data_dir().join("templates.txt")).unwrap();
    for tpl in t.templates() {
        assert!(tpl.text == "Oĩ porã" || tpl.text.starts_with("[curate:"), "{}", tpl.template_id);
    }
}

#[test]
fn template_file_missing_a_kind_fails_at_load() {
    let err = TemplateSet::parse("[templates]\nok confirmation : Oĩ porã\n").unwrap_err();
    assert!(err.iter().count() >= 3, "{err:?}");
}
