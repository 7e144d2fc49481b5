//! Model access: chat completion and text embedding.
//!
//! Everything above this module talks to models through [`ChatBackend`] and
//! [`EmbedBackend`] so the engine runs the same against an HTTP server or a
//! deterministic fake.

mod hash;
mod http;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use self::hash::{hash_embed, HashEmbedder};
pub use self::http::{HttpChat, HttpEmbedder, RetryPolicy};
pub use self::scripted::{FnChat, MatchMode, ScriptedChat};
use crate::error::BackendError;

pub type BackendResult<T> = std::result::Result<T, BackendError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub user: String,
    pub max_tokens: u32,
    pub temperature: f32,
}

impl ChatRequest {
    /// A user-only request at temperature 0.
    pub fn user(text: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            system: None,
            user: text.into(),
            max_tokens,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    /// Completion text exactly as the model returned it.
    pub text: String,
    pub usage: TokenUsage,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> BackendResult<ChatResponse>;

    fn model_name(&self) -> &str;
}

pub trait EmbedBackend: Send + Sync {
    /// One vector per input text, in input order. Vectors need not be
    /// normalized; [`Embedder`] does that.
    fn embed_batch(&self, texts: &[String]) -> BackendResult<Vec<Vec<f32>>>;

    fn dim(&self) -> usize;

    /// Identifier recorded in index and model metadata.
    fn describe(&self) -> String;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> BackendResult<ChatResponse> {
        (**self).complete(request)
    }

    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}

impl<T: EmbedBackend + ?Sized> EmbedBackend for Arc<T> {
    fn embed_batch(&self, texts: &[String]) -> BackendResult<Vec<Vec<f32>>> {
        (**self).embed_batch(texts)
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Role of a text being embedded; selects the configured prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedRole {
    Query,
    Passage,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedPrefixes {
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub passage: String,
}

/// Embedding backend plus role prefixes and the unit-normalization stage.
#[derive(Clone)]
pub struct Embedder {
    backend: Arc<dyn EmbedBackend>,
    prefixes: EmbedPrefixes,
    batch_size: usize,
}

impl Embedder {
    pub fn new(backend: Arc<dyn EmbedBackend>) -> Self {
        Self {
            backend,
            prefixes: EmbedPrefixes::default(),
            batch_size: 256,
        }
    }

    pub fn with_prefixes(mut self, prefixes: EmbedPrefixes) -> Self {
        self.prefixes = prefixes;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.backend.dim()
    }

    pub fn prefixes(&self) -> &EmbedPrefixes {
        &self.prefixes
    }

    pub fn describe(&self) -> String {
        self.backend.describe()
    }

    /// Unit-norm embeddings for `texts`, in order.
    pub fn embed(&self, texts: &[String], role: EmbedRole) -> BackendResult<Vec<Vec<f32>>> {
        let prefix = match role {
            EmbedRole::Query => &self.prefixes.query,
            EmbedRole::Passage => &self.prefixes.passage,
        };
        let dim = self.backend.dim();
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let inputs: Vec<String> = if prefix.is_empty() {
                chunk.to_vec()
            } else {
                chunk.iter().map(|t| format!("{prefix}{t}")).collect()
            };
            let vectors = self.backend.embed_batch(&inputs)?;
            if vectors.len() != inputs.len() {
                return Err(BackendError::Malformed(format!(
                    "expected {} embeddings, got {}",
                    inputs.len(),
                    vectors.len()
                )));
            }
            for mut v in vectors {
                if v.len() != dim {
                    return Err(BackendError::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
                normalize_in_place(&mut v);
                out.push(v);
            }
        }
        Ok(out)
    }

    pub fn embed_one(&self, text: &str, role: EmbedRole) -> BackendResult<Vec<f32>> {
        Ok(self
            .embed(&[text.to_string()], role)?
            .pop()
            .expect("one input yields one vector"))
    }
}

/// Scales `v` to unit Euclidean norm; a zero or non-finite vector becomes
/// the first basis vector.
pub fn normalize_in_place(v: &mut [f32]) {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    } else if !v.is_empty() {
        v.fill(0.0);
        v[0] = 1.0;
    }
}

/// Inner product accumulated in f64.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Wrong;

    impl EmbedBackend for Wrong {
        fn embed_batch(&self, texts: &[String]) -> BackendResult<Vec<Vec<f32>>> {
            Ok(texts
                .iter()
                .enumerate()
                .map(|(i, _)| vec![1.0; 4 + i])
                .collect())
        }
        fn dim(&self) -> usize {
            4
        }
        fn describe(&self) -> String {
            "wrong".into()
        }
    }

    #[test]
    fn dimension_mismatch_in_batch_is_error() {
        let e = Embedder::new(Arc::new(Wrong));
        let err = e
            .embed(&["a".into(), "b".into()], EmbedRole::Passage)
            .unwrap_err();
        assert!(matches!(err, BackendError::DimensionMismatch { expected: 4, actual: 5 }));
    }

    #[test]
    fn prefixes_are_applied_per_role() {
        let e = Embedder::new(Arc::new(HashEmbedder::new(16, 3))).with_prefixes(EmbedPrefixes {
            query: "query: ".into(),
            passage: "passage: ".into(),
        });
        let q = e.embed_one("boston", EmbedRole::Query).unwrap();
        let p = e.embed_one("boston", EmbedRole::Passage).unwrap();
        assert_eq!(q, hash_embed("query: boston", 16, 3));
        assert_eq!(p, hash_embed("passage: boston", 16, 3));
    }

    #[test]
    fn normalize_zero_vector() {
        let mut v = vec![0.0f32; 3];
        normalize_in_place(&mut v);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }
}
