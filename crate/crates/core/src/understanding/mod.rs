//! Understanding agent: rule-based mapping of Guaraní / Jopará token
//! sequences onto abstract intents.
//!
//! The parser is total. Vocabulary it does not know yields `UNKNOWN`
//! with confidence 0, which the conversation state agent turns into a
//! repair prompt.

mod lexicon;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::model::{Intent, LanguageTag, Utterance};

pub use lexicon::{LexEntry, Lexicon, PatternRule, ROLE_AFFIRMATION, ROLE_FUNCTION, ROLE_NEGATION};

/// Apostrophe variants written for the glottal stop; all map to `'`.
const PUSO_MARKS: [char; 3] = ['\u{2019}', '\u{02BC}', '\u{2018}'];
const EDGE_PUNCTUATION: &[char] = &[
    '.', ',', ';', ':', '!', '?', '¡', '¿', '"', '“', '”', '«', '»', '(', ')',
];

/// Lowercases, composes (NFC) and splits on whitespace. The glottal-stop
/// apostrophe and nasal diacritics are phonemic and are kept; edge
/// punctuation is dropped.
pub fn normalize(raw: &str) -> Vec<String> {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase().nfc().collect();
    lowered
        .split_whitespace()
        .map(|tok| {
            tok.chars()
                .map(|c| if PUSO_MARKS.contains(&c) { '\'' } else { c })
                .collect::<String>()
                .trim_matches(EDGE_PUNCTUATION)
                .to_string()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

/// Surface heuristic for the nd(a)-...-i negation circumfix: a token
/// starting with "nd" and the same or a later token ending in "i".
/// Approximate by construction; lexicon negation entries are authoritative.
fn circumfix_tokens(tokens: &[String]) -> Option<(usize, usize)> {
    let open = tokens.iter().position(|t| t.starts_with("nd"))?;
    let close = tokens[open..].iter().position(|t| t.ends_with('i'))?;
    Some((open, open + close))
}

fn polarity_evidence(tokens: &[String], lexicon: &Lexicon) -> (Polarity, BTreeSet<usize>) {
    let mut negative: BTreeSet<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| lexicon.entry(t).is_some_and(|e| e.role == ROLE_NEGATION))
        .map(|(i, _)| i)
        .collect();
    if let Some((open, close)) = circumfix_tokens(tokens) {
        negative.insert(open);
        negative.insert(close);
    }
    if !negative.is_empty() {
        return (Polarity::Negative, negative);
    }
    let positive: BTreeSet<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| lexicon.entry(t).is_some_and(|e| e.role == ROLE_AFFIRMATION))
        .map(|(i, _)| i)
        .collect();
    if !positive.is_empty() {
        return (Polarity::Positive, positive);
    }
    (Polarity::Neutral, BTreeSet::new())
}

/// Negative wins over positive; no evidence is neutral.
pub fn detect_polarity(tokens: &[String], lexicon: &Lexicon) -> Polarity {
    polarity_evidence(tokens, lexicon).0
}

/// A normalized token with the tags the parser assigned to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub text: String,
    pub language: LanguageTag,
    pub role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentFrame {
    pub intent: Intent,
    pub slots: BTreeMap<String, String>,
    pub polarity: Polarity,
    pub confidence: f64,
    /// Fraction of tokens tagged `es`.
    pub language_mix: f64,
    /// Rule that fired, if any.
    pub rule_id: Option<String>,
    pub tokens: Vec<TaggedToken>,
    pub turn_index: u32,
}

impl IntentFrame {
    pub fn summary(&self) -> String {
        let via = match &self.rule_id {
            Some(rule) => format!("rule {rule}"),
            None => "fallback".to_string(),
        };
        format!(
            "intent {} via {via} (polarity {}, confidence {:.2}, es-mix {:.2})",
            self.intent,
            match self.polarity {
                Polarity::Positive => "positive",
                Polarity::Negative => "negative",
                Polarity::Neutral => "neutral",
            },
            self.confidence,
            self.language_mix
        )
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        (num as f64 / den as f64).clamp(0.0, 1.0)
    }
}

pub fn parse_intent(utterance: &Utterance, lexicon: &Lexicon) -> IntentFrame {
    let mut texts = Vec::new();
    let mut tagged = Vec::new();
    for token in &utterance.tokens {
        for text in normalize(&token.surface) {
            let entry = lexicon.entry(&text);
            tagged.push(TaggedToken {
                text: text.clone(),
                language: entry.map(|e| e.language).unwrap_or(token.language_tag),
                role: entry.map(|e| e.role.clone()),
            });
            texts.push(text);
        }
    }
    let es = tagged.iter().filter(|t| t.language == LanguageTag::Es).count();
    let language_mix = ratio(es, tagged.len());
    let content = tagged
        .iter()
        .filter(|t| t.role.as_deref() != Some(ROLE_FUNCTION))
        .count();
    let roles: BTreeSet<&str> = tagged.iter().filter_map(|t| t.role.as_deref()).collect();
    let (polarity, evidence) = polarity_evidence(&texts, lexicon);

    let fired = lexicon.rules().iter().find(|rule| {
        rule.required.iter().all(|r| roles.contains(r.as_str()))
            && !rule.forbidden.iter().any(|r| roles.contains(r.as_str()))
    });

    let (intent, confidence, rule_id, slots) = match fired {
        Some(rule) => {
            let mut slots = BTreeMap::new();
            for (role, slot) in &rule.bindings {
                if let Some(t) = tagged.iter().find(|t| t.role.as_deref() == Some(role.as_str())) {
                    let value = lexicon
                        .entry(&t.text)
                        .and_then(|e| e.value.clone())
                        .unwrap_or_else(|| t.text.clone());
                    slots.insert(slot.clone(), value);
                }
            }
            let confidence = ratio(rule.required.len(), content.max(1));
            (rule.produces, confidence, Some(rule.rule_id.clone()), slots)
        }
        None => match polarity {
            Polarity::Negative => (Intent::Rejection, ratio(evidence.len(), content.max(1)), None, BTreeMap::new()),
            Polarity::Positive => (
                Intent::Confirmation,
                ratio(evidence.len(), content.max(1)),
                None,
                BTreeMap::new(),
            ),
            Polarity::Neutral => (Intent::Unknown, 0.0, None, BTreeMap::new()),
        },
    };
    let polarity = if intent == Intent::Rejection {
        Polarity::Negative
    } else {
        polarity
    };

    IntentFrame {
        intent,
        slots,
        polarity,
        confidence,
        language_mix,
        rule_id,
        tokens: tagged,
        turn_index: utterance.turn_index,
    }
}
