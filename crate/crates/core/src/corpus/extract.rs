use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::Serialize;
use tracing::warn;

use super::documents::Document;
use super::kg::{parse_line, write_entry, ExtractionMeta, KgCorpus, KgEntry};
use super::triple::{parse_triples, KnowledgeTriple};
use crate::backends::{ChatBackend, ChatRequest};
use crate::error::{Error, Result};
use crate::prompts::{prompt_hash, PromptTemplate};

pub const EXTRACTION_MAX_TOKENS: u32 = 1024;

pub fn build_extraction_prompt(doc: &Document, template: &PromptTemplate) -> String {
    template.render(&[("title", &doc.title), ("text", &doc.text)])
}

/// Extraction results keyed by (doc_id, prompt hash), optionally mirrored
/// to an append-only KG file so an interrupted run can resume.
pub struct ExtractionCache {
    kg: RwLock<KgCorpus>,
    sink: Option<Mutex<BufWriter<File>>>,
}

impl Default for ExtractionCache {
    fn default() -> Self {
        Self::in_memory(KgCorpus::new())
    }
}

impl ExtractionCache {
    pub fn in_memory(kg: KgCorpus) -> Self {
        Self {
            kg: RwLock::new(kg),
            sink: None,
        }
    }

    /// Opens (or creates) a KG file for resumable extraction. A corrupt
    /// final line, left by an interrupted write, is dropped and the file is
    /// compacted; corruption anywhere else is an error.
    pub fn open_append(path: &Path) -> Result<Self> {
        let mut kg = KgCorpus::new();
        if path.exists() {
            let lines: Vec<String> =
                BufReader::new(File::open(path)?).lines().collect::<std::io::Result<_>>()?;
            let last = lines.iter().rposition(|l| !l.trim().is_empty());
            for (idx, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match parse_line(line) {
                    Ok((doc_id, entry)) => kg.insert(&doc_id, entry.triples, entry.meta),
                    Err(message) if Some(idx) == last => {
                        warn!(path = %path.display(), line = idx + 1, %message, "dropping truncated KG line");
                    }
                    Err(message) => {
                        return Err(Error::Load {
                            path: path.display().to_string(),
                            line: idx + 1,
                            message,
                        })
                    }
                }
            }
            kg.save(path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            kg: RwLock::new(kg),
            sink: Some(Mutex::new(BufWriter::new(file))),
        })
    }

    pub fn get(&self, doc_id: &str, prompt_hash: &str) -> Option<Vec<KnowledgeTriple>> {
        let kg = self.kg.read().expect("cache lock poisoned");
        kg.entry(doc_id)
            .filter(|e| e.meta.prompt_hash == prompt_hash)
            .map(|e| e.triples.clone())
    }

    pub fn put(&self, doc_id: &str, triples: Vec<KnowledgeTriple>, meta: ExtractionMeta) -> Result<()> {
        if let Some(sink) = &self.sink {
            let entry = KgEntry {
                triples: triples.clone(),
                meta: meta.clone(),
            };
            let mut w = sink.lock().expect("sink lock poisoned");
            write_entry(&mut *w, doc_id, &entry)?;
            w.flush()?;
        }
        self.kg
            .write()
            .expect("cache lock poisoned")
            .insert(doc_id, triples, meta);
        Ok(())
    }

    pub fn snapshot(&self) -> KgCorpus {
        self.kg.read().expect("cache lock poisoned").clone()
    }

    pub fn into_kg(self) -> KgCorpus {
        self.kg.into_inner().expect("cache lock poisoned")
    }
}

/// Extracts the triples of one document with a single chat call, or returns
/// the cached result for the same document and prompt.
pub fn extract_triples(
    doc: &Document,
    chat: &dyn ChatBackend,
    cache: &ExtractionCache,
    template: &PromptTemplate,
) -> Result<Vec<KnowledgeTriple>> {
    let prompt = build_extraction_prompt(doc, template);
    let hash = prompt_hash(&prompt);
    if let Some(triples) = cache.get(&doc.doc_id, &hash) {
        return Ok(triples);
    }
    let response = chat
        .complete(&ChatRequest::user(prompt, EXTRACTION_MAX_TOKENS))
        .map_err(|e| Error::Extraction {
            doc_id: doc.doc_id.clone(),
            source: Box::new(e.into()),
        })?;
    let parsed = parse_triples(&response.text, &doc.doc_id);
    if parsed.triples.is_empty() {
        warn!(doc_id = %doc.doc_id, skipped = parsed.skipped, "extraction produced no triples");
    } else if parsed.skipped > 0 {
        warn!(doc_id = %doc.doc_id, skipped = parsed.skipped, "skipped malformed triple spans");
    }
    cache.put(
        &doc.doc_id,
        parsed.triples.clone(),
        ExtractionMeta {
            model: chat.model_name().to_string(),
            prompt_hash: hash,
        },
    )?;
    Ok(parsed.triples)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractionStats {
    pub documents: usize,
    pub cached: usize,
    pub extracted: usize,
    pub empty: usize,
    pub failed: Vec<(String, String)>,
}

/// Extracts every document on a pool of `workers` threads. Per-document
/// failures are collected rather than aborting the run.
pub fn extract_corpus(
    docs: &[Document],
    chat: &dyn ChatBackend,
    cache: &ExtractionCache,
    template: &PromptTemplate,
    workers: usize,
) -> Result<ExtractionStats> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let outcomes: Vec<(bool, Result<usize>)> = pool.install(|| {
        docs.par_iter()
            .map(|doc| {
                let hash = prompt_hash(&build_extraction_prompt(doc, template));
                let cached = cache.get(&doc.doc_id, &hash).is_some();
                (cached, extract_triples(doc, chat, cache, template).map(|t| t.len()))
            })
            .collect()
    });
    let mut stats = ExtractionStats {
        documents: docs.len(),
        ..Default::default()
    };
    for (doc, (cached, outcome)) in docs.iter().zip(outcomes) {
        match outcome {
            Ok(n) => {
                if cached {
                    stats.cached += 1;
                } else {
                    stats.extracted += 1;
                }
                if n == 0 {
                    stats.empty += 1;
                }
            }
            Err(e) => stats.failed.push((doc.doc_id.clone(), e.to_string())),
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::backends::{BackendResult, ChatResponse, TokenUsage};
    use crate::error::BackendError;
    use crate::prompts::PromptSet;

    struct Counting {
        reply: BackendResult<String>,
        calls: AtomicUsize,
    }

    impl Counting {
        fn ok(reply: &str) -> Self {
            Self {
                reply: Ok(reply.into()),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl ChatBackend for Counting {
        fn complete(&self, _: &ChatRequest) -> BackendResult<ChatResponse> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match &self.reply {
                Ok(text) => Ok(ChatResponse {
                    text: text.clone(),
                    usage: TokenUsage::default(),
                }),
                Err(_) => Err(BackendError::Other("down".into())),
            }
        }
        fn model_name(&self) -> &str {
            "counting"
        }
    }

    const DANA: &str = "Dana Blankstein- Cohen( born March 3, 1981) is the director of the Israeli Academy of Film and Television. She is a film director, and an Israeli culture entrepreneur.";
    const DANA_TRIPLES: &str = "<Dana Blankstein; full name; Dana Blankstein-Cohen>, <Dana Blankstein; birth date; March 3, 1981>, <Dana Blankstein; nationality; Israeli>, <Dana Blankstein; position; director of the Israeli Academy of Film and Television>, <Dana Blankstein; profession; film director, culture entrepreneur>";

    #[test]
    fn prompt_shape() {
        let template = PromptSet::default().extraction;
        let doc = Document::new("d", "Dana Blankstein", DANA);
        let p = build_extraction_prompt(&doc, &template);
        assert!(p.contains("\nTitle: Dana Blankstein\nText: Dana Blankstein- Cohen"));
        assert!(p.ends_with("Knowledge Triples:"));
        assert_eq!(p, build_extraction_prompt(&doc, &template));

        let empty = build_extraction_prompt(&Document::new("d", "T", ""), &template);
        assert!(empty.contains("\nTitle: T\nText: \nKnowledge Triples:"));
    }

    #[test]
    fn extracts_figure_example_and_caches() {
        let template = PromptSet::default().extraction;
        let doc = Document::new("d", "Dana Blankstein", DANA);
        let chat = Counting::ok(DANA_TRIPLES);
        let cache = ExtractionCache::default();
        let first = extract_triples(&doc, &chat, &cache, &template).unwrap();
        assert_eq!(first.len(), 5);
        assert_eq!(first[4].tail, "film director, culture entrepreneur");
        let second = extract_triples(&doc, &chat, &cache, &template).unwrap();
        assert_eq!(first, second);
        assert_eq!(chat.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn prompt_change_invalidates_cache() {
        let doc = Document::new("d", "Dana Blankstein", DANA);
        let chat = Counting::ok(DANA_TRIPLES);
        let cache = ExtractionCache::default();
        extract_triples(&doc, &chat, &cache, &PromptSet::default().extraction).unwrap();
        extract_triples(&doc, &chat, &cache, &PromptTemplate::new("{title}: {text}")).unwrap();
        assert_eq!(chat.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn empty_output_stores_empty_list() {
        let doc = Document::new("d", "t", "x");
        let cache = ExtractionCache::default();
        let triples =
            extract_triples(&doc, &Counting::ok(""), &cache, &PromptSet::default().extraction)
                .unwrap();
        assert!(triples.is_empty());
        assert_eq!(cache.snapshot().get("d"), Some(&[][..]));
    }

    #[test]
    fn backend_failure_names_document() {
        let chat = Counting {
            reply: Err(BackendError::Other("down".into())),
            calls: AtomicUsize::new(0),
        };
        let doc = Document::new("doc-7", "t", "x");
        let err = extract_triples(&doc, &chat, &ExtractionCache::default(), &PromptSet::default().extraction)
            .unwrap_err();
        assert!(matches!(err, Error::Extraction { ref doc_id, .. } if doc_id == "doc-7"));
    }

    #[test]
    fn resumes_from_append_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kg.jsonl");
        let template = PromptSet::default().extraction;
        let docs: Vec<Document> = (0..4)
            .map(|i| Document::new(format!("d{i}"), format!("T{i}"), "text"))
            .collect();
        let chat = Counting::ok("<a; b; c>");
        {
            let cache = ExtractionCache::open_append(&path).unwrap();
            extract_corpus(&docs[..2], &chat, &cache, &template, 2).unwrap();
        }
        // simulate a write cut off mid-line
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"doc_id\":\"d2\",\"tri").unwrap();
        drop(f);

        let cache = ExtractionCache::open_append(&path).unwrap();
        let stats = extract_corpus(&docs, &chat, &cache, &template, 3).unwrap();
        assert_eq!(stats.cached, 2);
        assert_eq!(stats.extracted, 2);
        assert_eq!(chat.calls.load(Ordering::SeqCst), 4);
        drop(cache);
        let kg = KgCorpus::load(&path).unwrap();
        assert_eq!(kg.len(), 4);
    }
}
