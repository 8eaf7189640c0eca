//! Line-oriented section format shared by the lexicon, policy and
//! template files.
//!
//! ```text
//! # comment
//! version seed-1
//! [section]
//! field field key=value key=a,b
//! ```
//!
//! Blank lines and lines whose first non-blank character is `#` are
//! ignored. `version` may only appear before the first section.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Parse,
    LexiconConflict,
    UnknownIntent,
    PolicyConflict,
    TemplateConflict,
    MissingTemplate,
    Validation,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::Parse => "parse",
            DiagnosticKind::LexiconConflict => "lexicon-conflict",
            DiagnosticKind::UnknownIntent => "unknown-intent",
            DiagnosticKind::PolicyConflict => "policy-conflict",
            DiagnosticKind::TemplateConflict => "template-conflict",
            DiagnosticKind::MissingTemplate => "missing-template",
            DiagnosticKind::Validation => "validation",
        }
    }
}

/// One problem found in a source document. `line` is 1-based; 0 means the
/// problem concerns the document as a whole.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            kind,
            message: message.into(),
        }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Diagnostic::new(line, DiagnosticKind::Parse, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.kind.as_str(), self.message)
    }
}

/// Every diagnostic found while loading a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn iter(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter()
    }

    pub fn has_kind(&self, kind: DiagnosticKind) -> bool {
        self.0.iter().any(|d| d.kind == kind)
    }

    pub fn first(&self) -> &Diagnostic {
        &self.0[0]
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

/// Failure to load one of the runtime's data files.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:\n{diagnostics}", path.display())]
    Invalid { path: PathBuf, diagnostics: Diagnostics },
}

impl LoadError {
    pub fn path(&self) -> &Path {
        match self {
            LoadError::Io { path, .. } | LoadError::Invalid { path, .. } => path,
        }
    }

    pub fn diagnostics(&self) -> Option<&Diagnostics> {
        match self {
            LoadError::Invalid { diagnostics, .. } => Some(diagnostics),
            LoadError::Io { .. } => None,
        }
    }
}

/// Reads `path` and hands its contents to `parse`.
pub fn load_with<T>(
    path: &Path,
    parse: impl FnOnce(&str) -> Result<T, Diagnostics>,
) -> Result<T, LoadError> {
    let source = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&source).map_err(|diagnostics| LoadError::Invalid {
        path: path.to_path_buf(),
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub number: usize,
    pub text: String,
}

impl Line {
    pub fn fields(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub lines: Vec<Line>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    pub version: Option<String>,
    pub sections: Vec<Section>,
}

impl Document {
    /// Splits `source` into sections. Structural problems are pushed onto
    /// `diags` and parsing continues with the next line.
    pub fn parse(source: &str, known_sections: &[&str], diags: &mut Vec<Diagnostic>) -> Document {
        let mut doc = Document::default();
        let mut seen_sections: Vec<(String, usize)> = Vec::new();
        for (idx, raw) in source.lines().enumerate() {
            let number = idx + 1;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            if let Some(rest) = text.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    diags.push(Diagnostic::parse(number, format!("unterminated section header {text:?}")));
                    continue;
                };
                let name = name.trim().to_string();
                if !known_sections.contains(&name.as_str()) {
                    diags.push(Diagnostic::parse(
                        number,
                        format!("unknown section [{name}] (expected one of: {})", known_sections.join(", ")),
                    ));
                }
                if let Some((_, first)) = seen_sections.iter().find(|(n, _)| *n == name) {
                    diags.push(Diagnostic::parse(
                        number,
                        format!("section [{name}] repeated (first at line {first})"),
                    ));
                }
                seen_sections.push((name.clone(), number));
                doc.sections.push(Section {
                    name,
                    line: number,
                    lines: Vec::new(),
                });
                continue;
            }
            match doc.sections.last_mut() {
                Some(section) => section.lines.push(Line {
                    number,
                    text: text.to_string(),
                }),
                None => {
                    let fields: Vec<&str> = text.split_whitespace().collect();
                    match fields.as_slice() {
                        ["version", v] if doc.version.is_none() => doc.version = Some(v.to_string()),
                        ["version", _] => diags.push(Diagnostic::parse(number, "version declared twice")),
                        _ => diags.push(Diagnostic::parse(
                            number,
                            format!("expected `version <text>` or a section header, found {text:?}"),
                        )),
                    }
                }
            }
        }
        doc
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn lines_of<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Line> + 'a {
        self.sections
            .iter()
            .filter(move |s| s.name == name)
            .flat_map(|s| s.lines.iter())
    }
}

/// Splits `fields` into positional fields and `key=value` options.
/// Duplicate keys are reported.
pub fn split_options<'a>(
    line: usize,
    fields: &[&'a str],
    diags: &mut Vec<Diagnostic>,
) -> (Vec<&'a str>, Vec<(&'a str, &'a str)>) {
    let mut positional = Vec::new();
    let mut options: Vec<(&str, &str)> = Vec::new();
    for field in fields {
        match field.split_once('=') {
            Some((k, v)) => {
                if options.iter().any(|(seen, _)| *seen == k) {
                    diags.push(Diagnostic::parse(line, format!("option `{k}` given twice")));
                } else {
                    options.push((k, v));
                }
            }
            None => positional.push(*field),
        }
    }
    (positional, options)
}

pub fn comma_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
