//! Canonical text encoding used for wire bodies and golden traces.
//!
//! Values go through `serde_json::Value`, whose object map is ordered by
//! key, so every value has exactly one byte encoding: compact JSON with
//! sorted keys. The pretty form is the same document with two-space
//! indentation and is what golden files store.

use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("domain types always serialize");
    serde_json::to_string(&value).expect("json values always serialize")
}

pub fn to_canonical_pretty<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("domain types always serialize");
    let mut out = serde_json::to_string_pretty(&value).expect("json values always serialize");
    out.push('\n');
    out
}

pub fn from_canonical_str<T: DeserializeOwned>(text: &str) -> Result<T, serde_json::Error> {
    serde_json::from_str(text)
}
