use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            title: title.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DuplicatePolicy {
    /// Any repeated doc_id aborts ingestion.
    #[default]
    Reject,
    /// Keep the first occurrence and count the rest.
    KeepFirst,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub count: usize,
    pub duplicates: usize,
}

/// Documents in insertion order, addressable by id.
#[derive(Debug, Clone, Default)]
pub struct DocumentStore {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl DocumentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self> {
        let mut store = Self::new();
        for doc in docs {
            store.insert(doc)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, doc: Document) -> Result<()> {
        if doc.doc_id.is_empty() {
            return Err(Error::InvalidArgument("empty doc_id".into()));
        }
        if self.by_id.contains_key(&doc.doc_id) {
            return Err(Error::DuplicateDocument(doc.doc_id));
        }
        self.by_id.insert(doc.doc_id.clone(), self.docs.len());
        self.docs.push(doc);
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }
}

#[derive(Deserialize)]
struct DocumentRecord {
    doc_id: Option<String>,
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: String,
}

/// Reads line-delimited `{"doc_id", "title", "text"}` records.
///
/// Blank lines are ignored. Line numbers in errors are 1-based.
pub fn ingest_documents<R: BufRead>(
    reader: R,
    policy: DuplicatePolicy,
) -> Result<(DocumentStore, IngestStats)> {
    let mut store = DocumentStore::new();
    let mut stats = IngestStats::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocumentRecord = serde_json::from_str(&line).map_err(|e| Error::Ingest {
            line: line_no,
            message: e.to_string(),
        })?;
        let doc_id = match record.doc_id {
            Some(id) if !id.is_empty() => id,
            _ => {
                return Err(Error::Ingest {
                    line: line_no,
                    message: "missing doc_id".into(),
                })
            }
        };
        if store.contains(&doc_id) {
            match policy {
                DuplicatePolicy::Reject => return Err(Error::DuplicateDocument(doc_id)),
                DuplicatePolicy::KeepFirst => {
                    stats.duplicates += 1;
                    continue;
                }
            }
        }
        store.insert(Document::new(doc_id, record.title, record.text))?;
        stats.count += 1;
    }
    Ok((store, stats))
}
