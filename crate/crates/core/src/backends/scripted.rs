use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendResult, ChatBackend, ChatRequest, ChatResponse, TokenUsage};
use crate::error::{BackendError, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// The prompt must equal a script key.
    #[default]
    Exact,
    /// The longest script key contained in the prompt wins.
    Substring,
}

/// Chat backend answering from a fixed prompt → response map.
#[derive(Debug, Clone)]
pub struct ScriptedChat {
    script: BTreeMap<String, String>,
    mode: MatchMode,
    name: String,
}

impl ScriptedChat {
    pub fn new(script: impl IntoIterator<Item = (String, String)>, mode: MatchMode) -> Self {
        Self {
            script: script.into_iter().collect(),
            mode,
            name: "scripted".into(),
        }
    }

    /// Loads a JSON object mapping prompts (or markers) to responses.
    pub fn from_file(path: &Path, mode: MatchMode) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let script: BTreeMap<String, String> =
            serde_json::from_str(&raw).map_err(|e| Error::Load {
                path: path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
        Ok(Self::new(script, mode))
    }

    pub fn lookup(&self, prompt: &str) -> Option<&str> {
        match self.mode {
            MatchMode::Exact => self.script.get(prompt).map(String::as_str),
            MatchMode::Substring => self
                .script
                .iter()
                .filter(|(k, _)| prompt.contains(k.as_str()))
                // longest key; BTreeMap order breaks equal-length ties
                .fold(None::<(&String, &String)>, |best, (k, v)| match best {
                    Some((bk, _)) if bk.len() >= k.len() => best,
                    _ => Some((k, v)),
                })
                .map(|(_, v)| v.as_str()),
        }
    }
}

impl ChatBackend for ScriptedChat {
    fn complete(&self, request: &ChatRequest) -> BackendResult<ChatResponse> {
        let text = self
            .lookup(&request.user)
            .ok_or(BackendError::NoScriptedResponse)?;
        Ok(ChatResponse {
            text: text.to_string(),
            usage: TokenUsage::default(),
        })
    }

    fn model_name(&self) -> &str {
        &self.name
    }
}

/// Chat backend computed by a closure over the prompt text.
pub struct FnChat<F> {
    f: F,
}

impl<F> FnChat<F>
where
    F: Fn(&str) -> BackendResult<String> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> ChatBackend for FnChat<F>
where
    F: Fn(&str) -> BackendResult<String> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> BackendResult<ChatResponse> {
        Ok(ChatResponse {
            text: (self.f)(&request.user)?,
            usage: TokenUsage::default(),
        })
    }

    fn model_name(&self) -> &str {
        "fn"
    }
}
