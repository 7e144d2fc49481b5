use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest error at line {line}: {message}")]
    Ingest { line: usize, message: String },

    #[error("duplicate doc_id {0:?}")]
    DuplicateDocument(String),

    #[error("invalid triple: {0}")]
    InvalidTriple(String),

    #[error("extraction failed for document {doc_id:?}: {source}")]
    Extraction {
        doc_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("load error in {path} at line {line}: {message}")]
    Load {
        path: String,
        line: usize,
        message: String,
    },

    #[error("backend error: {0}")]
    Backend(#[from] BackendError),

    #[error("index error: {0}")]
    Index(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("chain error: {0}")]
    Chain(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Ingest { .. } | Error::DuplicateDocument(_) => "ingest",
            Error::InvalidTriple(_) => "triple",
            Error::Extraction { .. } => "extraction",
            Error::Load { .. } => "load",
            Error::Backend(_) => "backend",
            Error::Index(_) => "index",
            Error::Dimension { .. } => "dimension",
            Error::InvalidArgument(_) => "argument",
            Error::Chain(_) => "chain",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("server returned status {status}: {message}")]
    Status { status: u16, message: String },

    #[error("malformed response: {0}")]
    Malformed(String),

    #[error("no scripted response for prompt")]
    NoScriptedResponse,

    #[error("embedding dimension mismatch within batch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{0}")]
    Other(String),
}
