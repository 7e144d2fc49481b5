#![allow(dead_code)]

use std::sync::Arc;

use chainrag::aligner::AlignerModel;
use chainrag::backends::{BackendResult, ChatBackend, Embedder, FnChat, HashEmbedder};
use chainrag::corpus::{Document, DocumentStore, ExtractionMeta, KgCorpus, KnowledgeTriple};
use chainrag::index::build_index;
use chainrag::pipeline::Stores;
use chainrag::prompts::PromptSet;

pub const DIM: usize = 256;

pub fn triple(h: &str, r: &str, t: &str, doc: &str) -> KnowledgeTriple {
    KnowledgeTriple::new(h, r, t, doc).unwrap()
}

pub fn documents() -> Vec<Document> {
    vec![
        Document::new(
            "kirton",
            "Kirton End",
            "Kirton End is a hamlet in the civil parish of Kirton in the Boston district of Lincolnshire.",
        ),
        Document::new(
            "boston",
            "Boston, Lincolnshire",
            "Boston is a market town in Lincolnshire. The population at the 2001 census was 35,124.",
        ),
        Document::new(
            "spalding",
            "Spalding",
            "Spalding is a market town on the River Welland. Its population was 28,722 in 2011.",
        ),
        Document::new(
            "skegness",
            "Skegness",
            "Skegness is a seaside town on the Lincolnshire coast. It had 19,579 residents in 2001.",
        ),
    ]
}

pub fn kg() -> KgCorpus {
    let mut kg = KgCorpus::new();
    let meta = ExtractionMeta::default();
    kg.insert(
        "kirton",
        vec![
            triple("Kirton End", "located in", "Boston", "kirton"),
            triple("Kirton End", "instance of", "hamlet", "kirton"),
        ],
        meta.clone(),
    );
    kg.insert(
        "boston",
        vec![
            triple("Boston", "population at the 2001 census", "35,124", "boston"),
            triple("Boston", "county", "Lincolnshire", "boston"),
        ],
        meta.clone(),
    );
    kg.insert(
        "spalding",
        vec![
            triple("Spalding", "population in 2011", "28,722", "spalding"),
            triple("Spalding", "located on", "River Welland", "spalding"),
        ],
        meta.clone(),
    );
    kg.insert(
        "skegness",
        vec![
            triple("Skegness", "residents in 2001", "19,579", "skegness"),
            triple("Skegness", "located on", "Lincolnshire coast", "skegness"),
        ],
        meta,
    );
    kg
}

pub const QUESTION: &str = "What was the population at the 2001 census of the town where Kirton End is located?";

/// Answers like a model that knows the two-step chain for [`QUESTION`].
pub fn two_hop_constructor(prompt: &str) -> BackendResult<String> {
    Ok(if prompt.ends_with("Thought: ") {
        "<Kirton End; located in; Boston>, <Boston; population at the 2001 census; 35,124>. So the answer is 35,124."
    } else {
        "<Boston; population at the 2001 census; 35,124>. So the answer is 35,124."
    }
    .to_string())
}

pub fn chat(f: fn(&str) -> BackendResult<String>) -> Arc<dyn ChatBackend> {
    Arc::new(FnChat::new(f))
}

pub fn stores_with(docs: Vec<Document>, kg: KgCorpus, constructor: Arc<dyn ChatBackend>) -> Stores {
    let embedder = Embedder::new(Arc::new(HashEmbedder::new(DIM, 7)));
    let index = build_index(&docs, &embedder).unwrap();
    Stores {
        documents: DocumentStore::from_documents(docs).unwrap(),
        index,
        kg,
        model: AlignerModel::identity(DIM, embedder.describe()),
        embedder,
        constructor,
        reader: chat(|_| Ok("35,124".into())),
        extraction: None,
        prompts: PromptSet::default(),
        fingerprint: "test".into(),
    }
}

pub fn stores(constructor: Arc<dyn ChatBackend>) -> Stores {
    stores_with(documents(), kg(), constructor)
}
