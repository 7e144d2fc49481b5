//! Response bodies shared by the CLI and the HTTP service, so both surfaces
//! return the same bytes for the same question.

use chainrag::pipeline::{answer, run_granularity_variant, AnyTrace, PipelineConfig, RankedText, Stores};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentPayload {
    pub doc_id: String,
    pub score: f64,
    pub best_triple: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievePayload {
    pub documents: Vec<DocumentPayload>,
    pub chain: Vec<String>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerPayload {
    pub answer: String,
    pub documents: Vec<DocumentPayload>,
}

fn documents(ranked: Vec<RankedText>) -> Vec<DocumentPayload> {
    ranked
        .into_iter()
        .map(|d| DocumentPayload {
            doc_id: d.doc_id,
            score: d.score,
            best_triple: d.best_unit,
        })
        .collect()
}

pub fn retrieve_payload(
    stores: &Stores,
    config: &PipelineConfig,
    question: &str,
    k: usize,
) -> chainrag::Result<(RetrievePayload, AnyTrace)> {
    let trace = run_granularity_variant(question, config, stores)?;
    let (ranked, _) = trace.ranking(k);
    let payload = RetrievePayload {
        documents: documents(ranked),
        chain: trace.chain(),
        iterations: trace.iteration_count(),
    };
    Ok((payload, trace))
}

pub fn answer_payload(
    stores: &Stores,
    config: &PipelineConfig,
    question: &str,
    k: usize,
) -> chainrag::Result<(AnswerPayload, AnyTrace)> {
    let (retrieved, trace) = retrieve_payload(stores, config, question, k)?;
    let ids: Vec<String> = retrieved.documents.iter().map(|d| d.doc_id.clone()).collect();
    let text = answer(question, &ids, config, stores)?;
    Ok((
        AnswerPayload {
            answer: text,
            documents: retrieved.documents,
        },
        trace,
    ))
}
