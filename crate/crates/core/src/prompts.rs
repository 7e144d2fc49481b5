//! Prompt templates for the three LLM roles: triple extraction, chain
//! construction and answer generation.
//!
//! Templates use `{name}` placeholders and are substituted in one pass, so
//! braces inside substituted values are never re-expanded.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

const EXTRACTION: &str = include_str!("../prompts/extraction.txt");
const CONSTRUCTOR: &str = include_str!("../prompts/constructor.txt");
const READER: &str = include_str!("../prompts/reader.txt");

/// Version tag of the embedded templates; bump when their text changes.
pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl AsRef<str>) -> Self {
        Self {
            text: text.as_ref().trim_end_matches(['\n', '\r']).to_string(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(std::fs::read_to_string(path)?))
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Replaces `{key}` occurrences with the matching value. Unknown
    /// placeholders are left as written.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len() + 256);
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let replaced = after.find('}').and_then(|close| {
                let key = &after[..close];
                vars.iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, v)| (close, *v))
            });
            match replaced {
                Some((close, value)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptSet {
    pub extraction: PromptTemplate,
    pub constructor: PromptTemplate,
    pub reader: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            extraction: PromptTemplate::new(EXTRACTION),
            constructor: PromptTemplate::new(CONSTRUCTOR),
            reader: PromptTemplate::new(READER),
        }
    }
}

/// Hex SHA-256 of a rendered prompt; used as the extraction cache key.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}
