//! The iterative retrieval loop: query, search, gather candidate units,
//! score, extend the chain, repeat; then rank documents and answer.

mod rank;
mod units;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

pub use self::rank::{hits_as_ranking, rank_documents, RankedDocument};
pub use self::units::{document_unit, sentence_units, split_sentences};
use crate::aligner::{score_units, select_candidates, AlignerModel, Scored};
use crate::backends::{ChatBackend, Embedder};
use crate::constructor::{extend_chain, ExtendOutcome, ReasoningChain};
use crate::corpus::{extract_triples, Document, DocumentStore, ExtractionCache, KgCorpus, KnowledgeTriple};
use crate::error::{Error, Result};
use crate::index::{format_query_with_label, search, DenseIndex, SearchHit, TRIPLE_LABEL};
use crate::prompts::PromptSet;
use crate::reader::{documents_context, generate_answer};
use crate::unit::{ChainUnit, TextUnit};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Triple,
    Document,
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub max_iterations: usize,
    pub docs_per_iteration: usize,
    pub candidates_per_iteration: usize,
    pub final_docs: usize,
    pub granularity: Granularity,
    /// Character cap for whole-document units.
    pub doc_char_budget: usize,
    /// Replaces "knowledge triples:" in queries for document/sentence units.
    pub context_label: String,
    /// Extract triples for documents missing from the KG instead of
    /// skipping them.
    pub online_extraction: bool,
    pub constructor_max_tokens: u32,
    pub reader_max_tokens: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            docs_per_iteration: 10,
            candidates_per_iteration: 20,
            final_docs: 5,
            granularity: Granularity::Triple,
            doc_char_budget: 1000,
            context_label: "context:".into(),
            online_extraction: false,
            constructor_max_tokens: 256,
            reader_max_tokens: 64,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_iterations", self.max_iterations),
            ("docs_per_iteration", self.docs_per_iteration),
            ("candidates_per_iteration", self.candidates_per_iteration),
            ("final_docs", self.final_docs),
            ("doc_char_budget", self.doc_char_budget),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

pub struct OnlineExtraction {
    pub chat: Arc<dyn ChatBackend>,
    pub cache: ExtractionCache,
}

/// Everything a run reads. Shared immutably across questions.
pub struct Stores {
    pub documents: DocumentStore,
    pub index: DenseIndex,
    pub kg: KgCorpus,
    pub model: AlignerModel,
    pub embedder: Embedder,
    pub constructor: Arc<dyn ChatBackend>,
    pub reader: Arc<dyn ChatBackend>,
    pub extraction: Option<OnlineExtraction>,
    pub prompts: PromptSet,
    /// Recorded in every trace.
    pub fingerprint: String,
}

impl Stores {
    pub fn check(&self) -> Result<()> {
        let dim = self.embedder.dim();
        for actual in [self.index.dim(), self.model.dim()] {
            if actual != dim {
                return Err(Error::Dimension { expected: dim, actual });
            }
        }
        Ok(())
    }

    fn document(&self, doc_id: &str) -> Result<&Document> {
        self.documents
            .get(doc_id)
            .ok_or_else(|| Error::Index(format!("document {doc_id:?} is in the index but not the corpus")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Terminated,
    Exhausted,
    EmptyPool,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<U> {
    pub iteration: usize,
    pub query: String,
    pub retrieved: Vec<SearchHit>,
    /// Units gathered from the retrieved documents, chain members excluded.
    pub pool_size: usize,
    pub candidates: Vec<Scored<U>>,
    pub outcome: ExtendOutcome<U>,
    pub completion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace<U> {
    pub schema_version: u32,
    pub config_fingerprint: String,
    pub question: String,
    pub granularity: Granularity,
    pub iterations: Vec<IterationRecord<U>>,
    pub chain: ReasoningChain<U>,
    /// Concatenation of every iteration's top-N candidates.
    pub candidates: Vec<Scored<U>>,
    pub stop: StopReason,
    pub warnings: Vec<String>,
}

impl<U: ChainUnit> RetrievalTrace<U> {
    /// Final ranking, falling back to the first iteration's search results
    /// when no candidate was ever scored. The flag reports the fallback.
    pub fn ranking(&self, k: usize) -> (Vec<RankedDocument<U>>, bool) {
        let ranked = rank_documents(&self.candidates, k);
        if !ranked.is_empty() {
            return (ranked, false);
        }
        let first = self.iterations.first().map(|r| r.retrieved.as_slice()).unwrap_or(&[]);
        (hits_as_ranking(first, k), true)
    }
}

fn run_loop<U, G>(
    question: &str,
    config: &PipelineConfig,
    stores: &Stores,
    label: &str,
    mut gather: G,
) -> Result<RetrievalTrace<U>>
where
    U: ChainUnit,
    G: FnMut(&SearchHit, &mut Vec<String>) -> Result<Vec<U>>,
{
    config.validate()?;
    let mut trace = RetrievalTrace {
        schema_version: TRACE_SCHEMA_VERSION,
        config_fingerprint: stores.fingerprint.clone(),
        question: question.to_string(),
        granularity: config.granularity,
        iterations: Vec::new(),
        chain: ReasoningChain::new(),
        candidates: Vec::new(),
        stop: StopReason::MaxIterations,
        warnings: Vec::new(),
    };

    for iteration in 1..=config.max_iterations {
        let rendered: Vec<String> = trace.chain.steps.iter().map(ChainUnit::render).collect();
        let query = format_query_with_label(question, label, &rendered);
        let retrieved = search(&stores.index, &query, config.docs_per_iteration, &stores.embedder)?;

        let mut pool = Vec::new();
        for hit in &retrieved {
            pool.extend(gather(hit, &mut trace.warnings)?);
        }
        pool.retain(|u| !trace.chain.contains(u));
        let pool_size = pool.len();

        if pool.is_empty() {
            trace.iterations.push(IterationRecord {
                iteration,
                query,
                retrieved,
                pool_size,
                candidates: Vec::new(),
                outcome: ExtendOutcome::Exhausted,
                completion: None,
            });
            trace.stop = StopReason::EmptyPool;
            break;
        }

        let scored = score_units(&stores.model, &stores.embedder, &query, &pool, iteration)?;
        let candidates = select_candidates(scored, config.candidates_per_iteration);
        let record = extend_chain(
            &stores.prompts.constructor,
            question,
            &trace.chain,
            &candidates,
            stores.constructor.as_ref(),
            config.constructor_max_tokens,
        )?;

        let stop = match &record.outcome {
            ExtendOutcome::Extended { unit, answer, .. } => {
                trace.chain.push(unit.clone())?;
                answer.clone().map(|a| {
                    trace.chain.terminate(a);
                    StopReason::Terminated
                })
            }
            ExtendOutcome::Terminated { answer } => {
                trace.chain.terminate(answer.clone());
                Some(StopReason::Terminated)
            }
            ExtendOutcome::Exhausted => Some(StopReason::Exhausted),
        };
        trace.candidates.extend(candidates.iter().cloned());
        trace.iterations.push(IterationRecord {
            iteration,
            query,
            retrieved,
            pool_size,
            candidates,
            outcome: record.outcome,
            completion: record.completion,
        });
        if let Some(reason) = stop {
            trace.stop = reason;
            break;
        }
    }
    Ok(trace)
}

/// Triples of one retrieved document: from the KG, or extracted online when
/// enabled; otherwise the document is skipped with a warning.
fn document_triples(
    hit: &SearchHit,
    config: &PipelineConfig,
    stores: &Stores,
    warnings: &mut Vec<String>,
) -> Result<Vec<KnowledgeTriple>> {
    if let Some(triples) = stores.kg.get(&hit.doc_id) {
        return Ok(triples.to_vec());
    }
    if config.online_extraction {
        if let Some(online) = &stores.extraction {
            let doc = stores.document(&hit.doc_id)?;
            return extract_triples(doc, online.chat.as_ref(), &online.cache, &stores.prompts.extraction);
        }
    }
    warn!(doc_id = %hit.doc_id, "document has no triples in the KG; skipped");
    warnings.push(format!("no triples for document {:?}; skipped", hit.doc_id));
    Ok(Vec::new())
}

/// The iterative loop with knowledge triples as units.
pub fn retrieve(question: &str, config: &PipelineConfig, stores: &Stores) -> Result<RetrievalTrace<KnowledgeTriple>> {
    run_loop(question, config, stores, TRIPLE_LABEL, |hit, warnings| {
        document_triples(hit, config, stores, warnings)
    })
}

fn retrieve_text(question: &str, config: &PipelineConfig, stores: &Stores) -> Result<RetrievalTrace<TextUnit>> {
    let sentences = config.granularity == Granularity::Sentence;
    run_loop(question, config, stores, &config.context_label, |hit, warnings| {
        let Some(doc) = stores.documents.get(&hit.doc_id) else {
            warnings.push(format!("document {:?} missing from the corpus; skipped", hit.doc_id));
            return Ok(Vec::new());
        };
        Ok(if sentences {
            sentence_units(doc)
        } else {
            vec![document_unit(doc, config.doc_char_budget)]
        })
    })
}

/// A trace of whichever unit the configured granularity uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnyTrace {
    Triple(RetrievalTrace<KnowledgeTriple>),
    Text(RetrievalTrace<TextUnit>),
}

/// A ranked document with its best unit rendered as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedText {
    pub doc_id: String,
    pub score: f64,
    pub best_unit: Option<String>,
    pub iteration: usize,
}

fn render_ranking<U: ChainUnit>(ranked: Vec<RankedDocument<U>>) -> Vec<RankedText> {
    ranked
        .into_iter()
        .map(|d| RankedText {
            doc_id: d.doc_id,
            score: d.score,
            best_unit: d.best_unit.map(|u| u.render()),
            iteration: d.iteration,
        })
        .collect()
}

impl AnyTrace {
    pub fn ranking(&self, k: usize) -> (Vec<RankedText>, bool) {
        match self {
            AnyTrace::Triple(t) => {
                let (r, fallback) = t.ranking(k);
                (render_ranking(r), fallback)
            }
            AnyTrace::Text(t) => {
                let (r, fallback) = t.ranking(k);
                (render_ranking(r), fallback)
            }
        }
    }

    pub fn chain(&self) -> Vec<String> {
        match self {
            AnyTrace::Triple(t) => t.chain.steps.iter().map(ChainUnit::render).collect(),
            AnyTrace::Text(t) => t.chain.steps.iter().map(ChainUnit::render).collect(),
        }
    }

    pub fn iteration_count(&self) -> usize {
        match self {
            AnyTrace::Triple(t) => t.iterations.len(),
            AnyTrace::Text(t) => t.iterations.len(),
        }
    }

    /// Doc ids retrieved (top K0) at each iteration, in order.
    pub fn retrieved_per_iteration(&self) -> Vec<Vec<String>> {
        fn ids<U>(t: &RetrievalTrace<U>) -> Vec<Vec<String>> {
            t.iterations
                .iter()
                .map(|r| r.retrieved.iter().map(|h| h.doc_id.clone()).collect())
                .collect()
        }
        match self {
            AnyTrace::Triple(t) => ids(t),
            AnyTrace::Text(t) => ids(t),
        }
    }
}

/// Dispatches on `config.granularity`; triple granularity is [`retrieve`].
pub fn run_granularity_variant(question: &str, config: &PipelineConfig, stores: &Stores) -> Result<AnyTrace> {
    Ok(match config.granularity {
        Granularity::Triple => AnyTrace::Triple(retrieve(question, config, stores)?),
        Granularity::Document | Granularity::Sentence => AnyTrace::Text(retrieve_text(question, config, stores)?),
    })
}

/// Baseline: one search with the bare question, no iteration.
pub fn single_shot_ranking(question: &str, k: usize, stores: &Stores) -> Result<Vec<RankedText>> {
    let hits = search(&stores.index, question, k, &stores.embedder)?;
    Ok(render_ranking(hits_as_ranking::<KnowledgeTriple>(&hits, k)))
}

/// One reader call over the ranked documents, in rank order.
pub fn answer(question: &str, doc_ids: &[String], config: &PipelineConfig, stores: &Stores) -> Result<String> {
    let docs = doc_ids
        .iter()
        .map(|id| stores.document(id))
        .collect::<Result<Vec<_>>>()?;
    let context = documents_context(docs);
    generate_answer(
        stores.reader.as_ref(),
        &stores.prompts.reader,
        &context,
        question,
        config.reader_max_tokens,
    )
}
