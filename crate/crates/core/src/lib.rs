//! Iterative retrieval-augmented generation over knowledge-triple reasoning
//! chains: extraction, dense retrieval, a trainable chain aligner, an LLM
//! chain constructor, and evaluation.

pub mod aligner;
pub mod backends;
pub mod constructor;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod index;
pub mod pipeline;
pub mod prompts;
pub mod reader;
pub mod unit;

pub use crate::error::{BackendError, Error, Result};

/// Numeric order for scores where `-0.0` and `0.0` are equal, so they fall
/// through to the caller's tie-break. NaN (never produced by finite inputs)
/// keeps a total order.
pub(crate) fn score_cmp(a: f64, b: f64) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or_else(|| a.total_cmp(&b))
}
