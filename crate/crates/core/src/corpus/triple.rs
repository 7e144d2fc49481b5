use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORBIDDEN: [char; 3] = [';', '<', '>'];

/// A `<head; relation; tail>` fact grounded in one source document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    /// Empty for triples that are not attached to a corpus document
    /// (for example triples read back from training files).
    #[serde(default)]
    pub source_doc_id: String,
}

impl KnowledgeTriple {
    /// Builds a triple, trimming each field. Fails when a field is empty or
    /// contains one of the wire delimiters.
    pub fn new(
        head: impl AsRef<str>,
        relation: impl AsRef<str>,
        tail: impl AsRef<str>,
        source_doc_id: impl Into<String>,
    ) -> Result<Self> {
        let head = check_field("head", head.as_ref())?;
        let relation = check_field("relation", relation.as_ref())?;
        let tail = check_field("tail", tail.as_ref())?;
        Ok(Self {
            head,
            relation,
            tail,
            source_doc_id: source_doc_id.into(),
        })
    }

    /// Wire form `<head; relation; tail>`.
    pub fn wire(&self) -> String {
        format!("<{}; {}; {}>", self.head, self.relation, self.tail)
    }

    /// Key used to compare triples produced by an LLM against known ones:
    /// case-folded, whitespace-collapsed fields. Provenance is ignored.
    pub fn match_key(&self) -> String {
        format!(
            "{};{};{}",
            normalize_for_match(&self.head),
            normalize_for_match(&self.relation),
            normalize_for_match(&self.tail)
        )
    }

    pub fn with_source(mut self, source_doc_id: impl Into<String>) -> Self {
        self.source_doc_id = source_doc_id.into();
        self
    }
}

impl fmt::Display for KnowledgeTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}; {}; {}>", self.head, self.relation, self.tail)
    }
}

fn check_field(name: &str, value: &str) -> Result<String> {
    let value = value.trim();
    if value.is_empty() {
        return Err(Error::InvalidTriple(format!("empty {name}")));
    }
    if let Some(c) = value.chars().find(|c| FORBIDDEN.contains(c)) {
        return Err(Error::InvalidTriple(format!(
            "{name} {value:?} contains delimiter {c:?}"
        )));
    }
    Ok(value.to_string())
}

/// Lowercases, trims and collapses internal whitespace runs to one space.
pub fn normalize_for_match(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedTriples {
    pub triples: Vec<KnowledgeTriple>,
    /// Number of `<...>` spans that were not well-formed triples.
    pub skipped: usize,
}

/// Extracts every `<h; r; t>` span from free LLM text, in order of appearance.
///
/// A span opens at `<` and closes at the next `>`; a second `<` before the
/// close abandons the open span. Spans without exactly two `;` delimiters or
/// with an empty field are counted in `skipped`. Commas inside a field are
/// kept, so aggregated tails stay one string.
pub fn parse_triples(text: &str, source_doc_id: &str) -> ParsedTriples {
    let mut out = ParsedTriples::default();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match c {
            '<' => {
                if open.is_some() {
                    out.skipped += 1;
                }
                open = Some(i + 1);
            }
            '>' => {
                if let Some(start) = open.take() {
                    match parse_span(&text[start..i], source_doc_id) {
                        Some(t) => out.triples.push(t),
                        None => out.skipped += 1,
                    }
                }
            }
            _ => {}
        }
    }
    if open.is_some() {
        out.skipped += 1;
    }
    out
}

fn parse_span(span: &str, source_doc_id: &str) -> Option<KnowledgeTriple> {
    let mut parts = span.split(';');
    let (head, relation, tail) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    KnowledgeTriple::new(head, relation, tail, source_doc_id).ok()
}
