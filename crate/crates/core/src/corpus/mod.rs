//! Documents, knowledge triples and the per-document KG corpus.

mod documents;
mod extract;
mod kg;
mod triple;

pub use self::documents::{ingest_documents, Document, DocumentStore, DuplicatePolicy, IngestStats};
pub use self::extract::{
    build_extraction_prompt, extract_corpus, extract_triples, ExtractionCache, ExtractionStats,
    EXTRACTION_MAX_TOKENS,
};
pub use self::kg::{ExtractionMeta, KgCorpus, KgEntry};
pub use self::triple::{normalize_for_match, parse_triples, KnowledgeTriple, ParsedTriples};
