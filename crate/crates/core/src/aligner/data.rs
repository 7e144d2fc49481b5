//! Training data for the aligner: chain decomposition and silver-chain
//! construction from gold documents.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use crate::backends::{ChatBackend, Embedder};
use crate::corpus::{normalize_for_match, parse_triples, KgCorpus, KnowledgeTriple};
use crate::error::{Error, Result};
use crate::eval::exact_match;
use crate::index::{format_iterative_query, search, DenseIndex};
use crate::prompts::PromptTemplate;
use crate::reader::generate_answer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub question: String,
    pub partial_chain: Vec<KnowledgeTriple>,
    pub positive: KnowledgeTriple,
    pub negatives: Vec<KnowledgeTriple>,
}

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    question: String,
    partial_chain: Vec<String>,
    positive: String,
    negatives: Vec<String>,
}

fn parse_one(wire: &str) -> std::result::Result<KnowledgeTriple, String> {
    let parsed = parse_triples(wire, "");
    match parsed.triples.as_slice() {
        [t] if parsed.skipped == 0 => Ok(t.clone()),
        _ => Err(format!("not a single triple: {wire:?}")),
    }
}

impl TrainingExample {
    fn to_record(&self) -> ExampleRecord {
        ExampleRecord {
            question: self.question.clone(),
            partial_chain: self.partial_chain.iter().map(KnowledgeTriple::wire).collect(),
            positive: self.positive.wire(),
            negatives: self.negatives.iter().map(KnowledgeTriple::wire).collect(),
        }
    }

    fn from_record(r: ExampleRecord) -> std::result::Result<Self, String> {
        Ok(Self {
            question: r.question,
            partial_chain: r
                .partial_chain
                .iter()
                .map(|w| parse_one(w))
                .collect::<std::result::Result<_, _>>()?,
            positive: parse_one(&r.positive)?,
            negatives: r
                .negatives
                .iter()
                .map(|w| parse_one(w))
                .collect::<std::result::Result<_, _>>()?,
        })
    }
}

/// Writes examples as line-delimited JSON with triples in wire form.
pub fn save_examples<W: Write>(examples: &[TrainingExample], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for ex in examples {
        serde_json::to_writer(&mut w, &ex.to_record())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_examples(path: &Path) -> Result<Vec<TrainingExample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Load {
            path: path.display().to_string(),
            line: idx + 1,
            message,
        };
        let record: ExampleRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        out.push(TrainingExample::from_record(record).map_err(err)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecomposeOutcome {
    pub examples: Vec<TrainingExample>,
    /// Prefixes dropped because the pool had too few negatives.
    pub skipped: usize,
}

fn make_example<R: Rng>(
    question: &str,
    prefix: &[KnowledgeTriple],
    positive: &KnowledgeTriple,
    pool: &[KnowledgeTriple],
    negatives: usize,
    rng: &mut R,
) -> Option<TrainingExample> {
    let positive_key = positive.match_key();
    let mut seen = HashSet::new();
    let eligible: Vec<&KnowledgeTriple> = pool
        .iter()
        .filter(|t| {
            let key = t.match_key();
            key != positive_key && seen.insert(key)
        })
        .collect();
    if eligible.len() < negatives {
        warn!(
            question,
            available = eligible.len(),
            needed = negatives,
            "negative pool too small; skipping example"
        );
        return None;
    }
    let sampled = eligible
        .choose_multiple(rng, negatives)
        .map(|t| (*t).clone())
        .collect();
    Some(TrainingExample {
        question: question.to_string(),
        partial_chain: prefix.to_vec(),
        positive: positive.clone(),
        negatives: sampled,
    })
}

/// One example per chain prefix: prefix `chain[..i]` with positive
/// `chain[i]`, negatives sampled without replacement from `pool`.
pub fn decompose_chain<R: Rng>(
    question: &str,
    chain: &[KnowledgeTriple],
    pool: &[KnowledgeTriple],
    negatives: usize,
    rng: &mut R,
) -> DecomposeOutcome {
    let mut out = DecomposeOutcome::default();
    for i in 0..chain.len() {
        match make_example(question, &chain[..i], &chain[i], pool, negatives, rng) {
            Some(ex) => out.examples.push(ex),
            None => out.skipped += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SilverConfig {
    /// Candidate chains tried per question.
    pub max_candidates: usize,
    pub max_chain_len: usize,
    pub negatives: usize,
    pub seed: u64,
    pub reader_max_tokens: u32,
}

impl Default for SilverConfig {
    fn default() -> Self {
        Self {
            max_candidates: 5,
            max_chain_len: 4,
            negatives: 7,
            seed: 42,
            reader_max_tokens: 64,
        }
    }
}

/// Where silver-data negatives come from.
pub enum NegativeSource<'a> {
    /// All triples of the question's gold documents.
    GoldDocs,
    /// Triples of the top documents retrieved for each prefix's iterative
    /// query, as the live pipeline would see them.
    Retrieved {
        index: &'a DenseIndex,
        embedder: &'a Embedder,
        docs_per_query: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SilverOutcome {
    pub chain: Vec<KnowledgeTriple>,
    /// 1-based position of the accepted chain among the candidates tried.
    pub accepted_candidate: usize,
    pub examples: Vec<TrainingExample>,
    pub skipped: usize,
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "by", "and", "or", "is", "was", "are",
    "were", "be", "what", "who", "which", "where", "when", "how", "whom", "whose", "did", "does",
    "do", "that", "this", "with", "from", "as", "it", "its",
];

fn content_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
        .map(str::to_string)
        .collect()
}

fn overlaps_question(entity: &str, question_tokens: &HashSet<String>) -> bool {
    let tokens = content_tokens(entity);
    !tokens.is_empty() && tokens.iter().all(|t| question_tokens.contains(t))
}

fn linked(a: &KnowledgeTriple, b: &KnowledgeTriple) -> bool {
    let ends = |t: &KnowledgeTriple| [normalize_for_match(&t.head), normalize_for_match(&t.tail)];
    let (ea, eb) = (ends(a), ends(b));
    ea.iter().any(|x| eb.contains(x))
}

/// Entity-linked candidate chains over `triples`, in discovery order.
///
/// Seeds are triples whose head or tail entity is fully mentioned in the
/// question. From each seed a depth-first walk appends triples sharing a
/// head or tail string with the previous triple; every maximal walk (no
/// further link, or `max_len` reached) is a candidate.
pub fn enumerate_candidate_chains(
    question: &str,
    triples: &[KnowledgeTriple],
    max_len: usize,
    max_candidates: usize,
) -> Vec<Vec<KnowledgeTriple>> {
    let question_tokens: HashSet<String> = content_tokens(question).into_iter().collect();
    let mut chains: Vec<Vec<usize>> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();

    fn walk(
        path: &mut Vec<usize>,
        triples: &[KnowledgeTriple],
        max_len: usize,
        max_candidates: usize,
        chains: &mut Vec<Vec<usize>>,
        seen: &mut HashSet<Vec<usize>>,
    ) {
        if chains.len() >= max_candidates {
            return;
        }
        let last = &triples[*path.last().expect("non-empty path")];
        let next: Vec<usize> = if path.len() >= max_len {
            Vec::new()
        } else {
            (0..triples.len())
                .filter(|i| !path.contains(i) && linked(last, &triples[*i]))
                .collect()
        };
        if next.is_empty() {
            if seen.insert(path.clone()) {
                chains.push(path.clone());
            }
            return;
        }
        for i in next {
            path.push(i);
            walk(path, triples, max_len, max_candidates, chains, seen);
            path.pop();
            if chains.len() >= max_candidates {
                return;
            }
        }
    }

    for (i, t) in triples.iter().enumerate() {
        if chains.len() >= max_candidates || max_len == 0 {
            break;
        }
        if overlaps_question(&t.head, &question_tokens) || overlaps_question(&t.tail, &question_tokens) {
            walk(&mut vec![i], triples, max_len, max_candidates, &mut chains, &mut seen);
        }
    }
    chains
        .into_iter()
        .map(|c| c.into_iter().map(|i| triples[i].clone()).collect())
        .collect()
}

fn question_rng(seed: u64, question: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(question.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Builds training examples for one QA pair, or `None` when no candidate
/// chain leads the reader to a gold answer.
#[allow(clippy::too_many_arguments)]
pub fn build_silver_data(
    question: &str,
    gold_doc_ids: &[String],
    gold_answers: &[String],
    reader: &dyn ChatBackend,
    reader_template: &PromptTemplate,
    kg: &KgCorpus,
    negatives: &NegativeSource<'_>,
    config: &SilverConfig,
) -> Result<Option<SilverOutcome>> {
    let gold_triples: Vec<KnowledgeTriple> = gold_doc_ids
        .iter()
        .filter_map(|id| kg.get(id))
        .flat_map(|ts| ts.iter().cloned())
        .collect();
    if gold_triples.is_empty() {
        return Ok(None);
    }
    let candidates = enumerate_candidate_chains(
        question,
        &gold_triples,
        config.max_chain_len,
        config.max_candidates,
    );
    for (n, chain) in candidates.into_iter().enumerate() {
        let context = chain
            .iter()
            .map(KnowledgeTriple::wire)
            .collect::<Vec<_>>()
            .join(", ");
        let prediction = generate_answer(
            reader,
            reader_template,
            &context,
            question,
            config.reader_max_tokens,
        )?;
        if !exact_match(&prediction, gold_answers) {
            continue;
        }
        let mut rng = question_rng(config.seed, question);
        let outcome = match negatives {
            NegativeSource::GoldDocs => {
                decompose_chain(question, &chain, &gold_triples, config.negatives, &mut rng)
            }
            NegativeSource::Retrieved {
                index,
                embedder,
                docs_per_query,
            } => {
                let mut out = DecomposeOutcome::default();
                for i in 0..chain.len() {
                    let query = format_iterative_query(question, &chain[..i]);
                    let pool: Vec<KnowledgeTriple> = search(index, &query, *docs_per_query, embedder)?
                        .iter()
                        .filter_map(|hit| kg.get(&hit.doc_id))
                        .flat_map(|ts| ts.iter().cloned())
                        .collect();
                    match make_example(question, &chain[..i], &chain[i], &pool, config.negatives, &mut rng) {
                        Some(ex) => out.examples.push(ex),
                        None => out.skipped += 1,
                    }
                }
                out
            }
        };
        return Ok(Some(SilverOutcome {
            chain,
            accepted_candidate: n + 1,
            examples: outcome.examples,
            skipped: outcome.skipped,
        }));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: &str, r: &str, tl: &str, d: &str) -> KnowledgeTriple {
        KnowledgeTriple::new(h, r, tl, d).unwrap()
    }

    fn pool(n: usize) -> Vec<KnowledgeTriple> {
        (0..n).map(|i| t(&format!("n{i}"), "r", "x", "p")).collect()
    }

    #[test]
    fn two_triple_chain_gives_two_examples() {
        let chain = vec![t("a", "r", "b", "d1"), t("b", "r", "c", "d2")];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = decompose_chain("q", &chain, &pool(10), 7, &mut rng);
        assert_eq!(out.examples.len(), 2);
        assert!(out.examples[0].partial_chain.is_empty());
        assert_eq!(out.examples[0].positive, chain[0]);
        assert_eq!(out.examples[1].partial_chain, vec![chain[0].clone()]);
        assert_eq!(out.examples[1].positive, chain[1]);
        for ex in &out.examples {
            assert_eq!(ex.negatives.len(), 7);
            let keys: HashSet<_> = ex.negatives.iter().map(|n| n.match_key()).collect();
            assert_eq!(keys.len(), 7);
            assert!(!keys.contains(&ex.positive.match_key()));
        }
    }

    #[test]
    fn exact_pool_is_fully_used() {
        let chain = vec![t("a", "r", "b", "d")];
        let mut p = pool(7);
        p.push(chain[0].clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = decompose_chain("q", &chain, &p, 7, &mut rng);
        assert_eq!(out.examples.len(), 1);
        let got: HashSet<_> = out.examples[0].negatives.iter().map(|n| n.match_key()).collect();
        let want: HashSet<_> = pool(7).iter().map(|n| n.match_key()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn small_pool_skips() {
        let chain = vec![t("a", "r", "b", "d")];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = decompose_chain("q", &chain, &pool(3), 7, &mut rng);
        assert!(out.examples.is_empty());
        assert_eq!(out.skipped, 1);
    }

    #[test]
    fn examples_file_round_trip() {
        let chain = vec![t("Kirton End", "location", "Boston", ""), t("Boston", "population", "35,124", "")];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let examples = decompose_chain("q?", &chain, &pool(9), 7, &mut rng).examples;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex.jsonl");
        save_examples(&examples, File::create(&path).unwrap()).unwrap();
        // The file keeps wire text only; source doc ids are not stored.
        let unsourced: Vec<_> = examples
            .into_iter()
            .map(|mut e| {
                e.negatives = e.negatives.into_iter().map(|n| n.with_source("")).collect();
                e
            })
            .collect();
        assert_eq!(load_examples(&path).unwrap(), unsourced);
    }

    #[test]
    fn enumeration_follows_entity_links() {
        let triples = vec![
            t("Kirton End", "location", "Boston", "k"),
            t("Boston", "population in 2001 census", "35,124", "b"),
            t("Spalding", "river", "Welland", "s"),
        ];
        let chains = enumerate_candidate_chains(
            "What was the 2001 population of the town where Kirton End is located?",
            &triples,
            4,
            5,
        );
        assert_eq!(chains, vec![vec![triples[0].clone(), triples[1].clone()]]);
    }

    #[test]
    fn enumeration_caps_candidates() {
        let triples: Vec<_> = (0..10).map(|i| t("Hub", &format!("r{i}"), &format!("x{i}"), "d")).collect();
        let chains = enumerate_candidate_chains("hub", &triples, 4, 5);
        assert_eq!(chains.len(), 5);
        assert!(chains.iter().all(|c| c.len() == 4));
    }
}
