//! Reasoning chain constructor: asks the LLM to complete the chain from the
//! aligner's candidates, keeps only the first new candidate it names, and
//! detects when it has produced an answer.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::aligner::Scored;
use crate::backends::{ChatBackend, ChatRequest};
use crate::corpus::{parse_triples, KnowledgeTriple};
use crate::error::{Error, Result};
use crate::prompts::PromptTemplate;
use crate::unit::ChainUnit;

const ANSWER_MARKER: &str = "the answer is";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningChain<U> {
    pub steps: Vec<U>,
    pub answer: Option<String>,
}

impl<U> Default for ReasoningChain<U> {
    fn default() -> Self {
        Self {
            steps: Vec::new(),
            answer: None,
        }
    }
}

impl<U: ChainUnit> ReasoningChain<U> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_terminal(&self) -> bool {
        self.answer.is_some()
    }

    pub fn contains(&self, unit: &U) -> bool {
        let key = unit.match_key();
        self.steps.iter().any(|s| s.match_key() == key)
    }

    pub fn push(&mut self, unit: U) -> Result<()> {
        if self.is_terminal() {
            return Err(Error::Chain("cannot extend a terminated chain".into()));
        }
        if self.contains(&unit) {
            return Err(Error::Chain(format!("{} is already in the chain", unit.render())));
        }
        self.steps.push(unit);
        Ok(())
    }

    pub fn terminate(&mut self, answer: String) {
        self.answer = Some(answer);
    }
}

pub fn build_constructor_prompt<U: ChainUnit>(
    template: &PromptTemplate,
    question: &str,
    chain: &ReasoningChain<U>,
    candidates: &[U],
) -> String {
    let context = candidates
        .iter()
        .map(ChainUnit::render)
        .collect::<Vec<_>>()
        .join(U::CONTEXT_SEPARATOR);
    let thought = chain
        .steps
        .iter()
        .map(ChainUnit::render)
        .collect::<Vec<_>>()
        .join(U::THOUGHT_SEPARATOR);
    template.render(&[
        ("context", &context),
        ("question", question),
        ("thought", &thought),
    ])
}

/// Text after the first case-insensitive "the answer is", up to the end of
/// that line, trimmed and without a trailing period.
pub fn find_answer(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let marker = ANSWER_MARKER.as_bytes();
    let start = bytes
        .windows(marker.len())
        .position(|w| w.eq_ignore_ascii_case(marker))?;
    let rest = &text[start + marker.len()..];
    let line = rest.split('\n').next().unwrap_or("");
    let trimmed = line.trim();
    Some(trimmed.strip_suffix('.').unwrap_or(trimmed).trim().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub triples: Vec<KnowledgeTriple>,
    pub answer: Option<String>,
}

pub fn parse_chain_output(text: &str) -> ChainOutput {
    ChainOutput {
        triples: parse_triples(text, "").triples,
        answer: find_answer(text),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Via {
    Generated,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtendOutcome<U> {
    /// `unit` is appended. `answer` is set when the completion named no
    /// other new candidate before answering, so the chain is complete.
    Extended {
        unit: U,
        via: Via,
        answer: Option<String>,
    },
    Terminated {
        answer: String,
    },
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendRecord<U> {
    pub outcome: ExtendOutcome<U>,
    /// Raw completion; absent when no call was made.
    pub completion: Option<String>,
}

/// True when `unit` is the only unit the completion proposes beyond the
/// current chain, so appending it finishes the generated chain.
fn only_new_proposal<U: ChainUnit>(completion: &str, chain: &ReasoningChain<U>, unit: &U, named: usize) -> bool {
    match U::proposed_keys(completion) {
        Some(keys) => {
            let in_chain: HashSet<String> = chain.steps.iter().map(ChainUnit::match_key).collect();
            let key = unit.match_key();
            keys.iter().filter(|k| !in_chain.contains(*k)).all(|k| *k == key)
        }
        None => named == 1,
    }
}

/// One constructor step. Makes exactly one chat call unless every candidate
/// is already in the chain.
pub fn extend_chain<U: ChainUnit>(
    template: &PromptTemplate,
    question: &str,
    chain: &ReasoningChain<U>,
    candidates: &[Scored<U>],
    chat: &dyn ChatBackend,
    max_tokens: u32,
) -> Result<ExtendRecord<U>> {
    if chain.is_terminal() {
        return Err(Error::Chain("chain already terminated".into()));
    }
    let available: Vec<&Scored<U>> = candidates.iter().filter(|c| !chain.contains(&c.unit)).collect();
    if available.is_empty() {
        return Ok(ExtendRecord {
            outcome: ExtendOutcome::Exhausted,
            completion: None,
        });
    }
    let units: Vec<U> = candidates.iter().map(|c| c.unit.clone()).collect();
    let prompt = build_constructor_prompt(template, question, chain, &units);
    let completion = chat.complete(&ChatRequest::user(prompt, max_tokens))?.text;

    let available_units: Vec<U> = available.iter().map(|c| c.unit.clone()).collect();
    let mut seen = HashSet::new();
    let named: Vec<usize> = U::mentions(&completion, &available_units)
        .into_iter()
        .filter(|i| seen.insert(*i))
        .collect();
    let answer = find_answer(&completion);

    let outcome = match (named.first(), answer) {
        (Some(&first), answer) => {
            let unit = available_units[first].clone();
            let completes = answer.is_some() && only_new_proposal(&completion, chain, &unit, named.len());
            ExtendOutcome::Extended {
                unit,
                via: Via::Generated,
                answer: answer.filter(|_| completes),
            }
        }
        (None, Some(answer)) => ExtendOutcome::Terminated { answer },
        (None, None) => {
            let best = available
                .iter()
                .fold(None::<&Scored<U>>, |best, c| match best {
                    Some(b) if b.score >= c.score => Some(b),
                    _ => Some(c),
                })
                .expect("available is non-empty");
            ExtendOutcome::Extended {
                unit: best.unit.clone(),
                via: Via::Fallback,
                answer: None,
            }
        }
    };
    Ok(ExtendRecord {
        outcome,
        completion: Some(completion),
    })
}
