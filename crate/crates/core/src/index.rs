//! Exact inner-product document index and iterative query rendering.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{dot, EmbedPrefixes, EmbedRole, Embedder};
use crate::corpus::{Document, KnowledgeTriple};
use crate::error::{Error, Result};

pub const TRIPLE_LABEL: &str = "knowledge triples:";

/// `question` alone for an empty chain, otherwise
/// `{question}. knowledge triples: <h; r; t>, <h; r; t>`.
pub fn format_iterative_query(question: &str, chain: &[KnowledgeTriple]) -> String {
    let rendered: Vec<String> = chain.iter().map(KnowledgeTriple::wire).collect();
    format_query_with_label(question, TRIPLE_LABEL, &rendered)
}

pub fn format_query_with_label(question: &str, label: &str, items: &[String]) -> String {
    if items.is_empty() {
        question.to_string()
    } else {
        format!("{question}. {label} {}", items.join(", "))
    }
}

/// Text embedded for a document: `{title}\n{text}`.
pub fn document_embedding_text(doc: &Document) -> String {
    format!("{}\n{}", doc.title, doc.text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub backend: String,
    pub prefixes: EmbedPrefixes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub score: f64,
}

/// Row-major matrix of unit-norm document embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    doc_ids: Vec<String>,
    dim: usize,
    matrix: Vec<f32>,
    meta: IndexMeta,
}

const FORMAT_NAME: &str = "chainrag-dense-index";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    dim: usize,
    meta: IndexMeta,
    doc_ids: Vec<String>,
    matrix: Vec<f32>,
}

impl DenseIndex {
    /// Builds an index from precomputed unit vectors.
    pub fn from_vectors(doc_ids: Vec<String>, vectors: Vec<Vec<f32>>, meta: IndexMeta) -> Result<Self> {
        if doc_ids.len() != vectors.len() {
            return Err(Error::Index(format!(
                "{} doc ids but {} vectors",
                doc_ids.len(),
                vectors.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = doc_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateDocument(dup.clone()));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut matrix = Vec::with_capacity(dim * vectors.len());
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: v.len(),
                });
            }
            matrix.extend_from_slice(v);
        }
        Ok(Self {
            doc_ids,
            dim,
            matrix,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn meta(&self) -> &IndexMeta {
        &self.meta
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    /// Top `k` documents by inner product with `query`, ties broken by
    /// ascending doc_id.
    pub fn search_vector(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>> {
        if self.is_empty() {
            return Err(Error::Index("search on empty index".into()));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if query.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .map(|i| (dot(self.row(i), query), i))
            .collect();
        scored.sort_by(|a, b| {
            crate::score_cmp(b.0, a.0)
                .then_with(|| self.doc_ids[a.1].cmp(&self.doc_ids[b.1]))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(score, i)| SearchHit {
                doc_id: self.doc_ids[i].clone(),
                score,
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = IndexFile {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            dim: self.dim,
            meta: self.meta.clone(),
            doc_ids: self.doc_ids.clone(),
            matrix: self.matrix.clone(),
        };
        serde_json::to_writer(BufWriter::new(File::create(path)?), &file)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: IndexFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if file.format != FORMAT_NAME || file.version != FORMAT_VERSION {
            return Err(Error::Index(format!(
                "unsupported index format {} v{}",
                file.format, file.version
            )));
        }
        if file.matrix.len() != file.dim * file.doc_ids.len() {
            return Err(Error::Index("matrix size does not match dim x rows".into()));
        }
        Ok(Self {
            doc_ids: file.doc_ids,
            dim: file.dim,
            matrix: file.matrix,
            meta: file.meta,
        })
    }
}

pub fn build_index(docs: &[Document], embedder: &Embedder) -> Result<DenseIndex> {
    if docs.is_empty() {
        return Err(Error::Index("cannot build an index over zero documents".into()));
    }
    let texts: Vec<String> = docs.iter().map(document_embedding_text).collect();
    let vectors = embedder.embed(&texts, EmbedRole::Passage).map_err(|e| {
        Error::Index(format!(
            "embedding documents {}..{} failed: {e}",
            docs[0].doc_id,
            docs[docs.len() - 1].doc_id
        ))
    })?;
    DenseIndex::from_vectors(
        docs.iter().map(|d| d.doc_id.clone()).collect(),
        vectors,
        IndexMeta {
            backend: embedder.describe(),
            prefixes: embedder.prefixes().clone(),
        },
    )
}

pub fn search(index: &DenseIndex, query_text: &str, k: usize, embedder: &Embedder) -> Result<Vec<SearchHit>> {
    if index.is_empty() {
        return Err(Error::Index("search on empty index".into()));
    }
    let q = embedder.embed_one(query_text, EmbedRole::Query)?;
    index.search_vector(&q, k)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backends::HashEmbedder;

    fn embedder() -> Embedder {
        Embedder::new(Arc::new(HashEmbedder::new(32, 7)))
    }

    fn docs() -> Vec<Document> {
        vec![
            Document::new("b", "Boston", "Boston is a market town in Lincolnshire."),
            Document::new("a", "Kirton End", "Kirton End is a hamlet near Boston."),
            Document::new("c", "Spalding", "Spalding is a town on the River Welland."),
        ]
    }

    #[test]
    fn query_formatting() {
        assert_eq!(format_iterative_query("Who is X?", &[]), "Who is X?");
        let t1 = KnowledgeTriple::new("Kirton End", "location", "Boston", "a").unwrap();
        assert_eq!(
            format_iterative_query("Q?", std::slice::from_ref(&t1)),
            "Q?. knowledge triples: <Kirton End; location; Boston>"
        );
        let t2 = KnowledgeTriple::new("Boston", "population in 2001 census", "35,124", "b").unwrap();
        assert_eq!(
            format_iterative_query("Q?", &[t1, t2]),
            "Q?. knowledge triples: <Kirton End; location; Boston>, <Boston; population in 2001 census; 35,124>"
        );
    }

    #[test]
    fn build_rows_are_unit_norm_and_deterministic() {
        let index = build_index(&docs(), &embedder()).unwrap();
        assert_eq!(index.len(), 3);
        for i in 0..3 {
            let n = dot(index.row(i), index.row(i));
            assert!((n - 1.0).abs() < 1e-6);
        }
        assert_eq!(index, build_index(&docs(), &embedder()).unwrap());
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let mut d = docs();
        d.push(Document::new("a", "x", "y"));
        assert!(matches!(build_index(&d, &embedder()), Err(Error::DuplicateDocument(id)) if id == "a"));
    }

    #[test]
    fn self_query_ranks_first() {
        let d = docs();
        let index = build_index(&d, &embedder()).unwrap();
        let hits = search(&index, &document_embedding_text(&d[2]), 1, &embedder()).unwrap();
        assert_eq!(hits[0].doc_id, "c");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn k_is_clamped_and_ties_use_doc_id() {
        let d = vec![
            Document::new("z", "", "same text"),
            Document::new("m", "", "same text"),
            Document::new("q", "", "other words entirely"),
        ];
        let index = build_index(&d, &embedder()).unwrap();
        let hits = search(&index, "same text", 10, &embedder()).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].doc_id, "m");
        assert_eq!(hits[1].doc_id, "z");
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn empty_index_errors() {
        let index = DenseIndex::from_vectors(vec![], vec![], IndexMeta {
            backend: "x".into(),
            prefixes: EmbedPrefixes::default(),
        })
        .unwrap();
        assert!(search(&index, "q", 3, &embedder()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let index = build_index(&docs(), &embedder()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        index.save(&path).unwrap();
        assert_eq!(DenseIndex::load(&path).unwrap(), index);
    }
}
