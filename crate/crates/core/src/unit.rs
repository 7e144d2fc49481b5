//! The atomic item a reasoning chain is built from: a knowledge triple by
//! default, or a sentence / truncated document for the coarser variants.

use std::collections::HashMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_for_match, parse_triples, KnowledgeTriple};

pub trait ChainUnit: Clone + Debug + PartialEq + Serialize + Send + Sync {
    /// Text used in prompts, iterative queries and embeddings.
    fn render(&self) -> String;

    fn source_doc_id(&self) -> &str;

    /// Normalized identity used to match LLM output and detect repeats.
    fn match_key(&self) -> String;

    /// Indices into `candidates` referenced by `output`, in order of
    /// appearance. Repeats are kept.
    fn mentions(output: &str, candidates: &[Self]) -> Vec<usize>;

    /// Match keys of every unit `output` proposes, candidate or not, when
    /// that can be told from the text alone.
    fn proposed_keys(_output: &str) -> Option<Vec<String>> {
        None
    }

    /// Separator between units in the constructor's context line.
    const CONTEXT_SEPARATOR: &'static str;

    /// Separator between chain units in the constructor's thought line.
    const THOUGHT_SEPARATOR: &'static str;
}

impl ChainUnit for KnowledgeTriple {
    fn render(&self) -> String {
        self.wire()
    }

    fn source_doc_id(&self) -> &str {
        &self.source_doc_id
    }

    fn match_key(&self) -> String {
        KnowledgeTriple::match_key(self)
    }

    fn mentions(output: &str, candidates: &[Self]) -> Vec<usize> {
        let mut by_key: HashMap<String, usize> = HashMap::new();
        for (i, c) in candidates.iter().enumerate() {
            by_key.entry(c.match_key()).or_insert(i);
        }
        parse_triples(output, "")
            .triples
            .iter()
            .filter_map(|t| by_key.get(&t.match_key()).copied())
            .collect()
    }

    fn proposed_keys(output: &str) -> Option<Vec<String>> {
        Some(parse_triples(output, "").triples.iter().map(|t| t.match_key()).collect())
    }

    const CONTEXT_SEPARATOR: &'static str = ", ";
    const THOUGHT_SEPARATOR: &'static str = ",";
}

/// A sentence or a (possibly truncated) whole document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextUnit {
    pub text: String,
    pub source_doc_id: String,
}

impl ChainUnit for TextUnit {
    fn render(&self) -> String {
        self.text.clone()
    }

    fn source_doc_id(&self) -> &str {
        &self.source_doc_id
    }

    fn match_key(&self) -> String {
        normalize_for_match(&self.text)
    }

    fn mentions(output: &str, candidates: &[Self]) -> Vec<usize> {
        let haystack = normalize_for_match(output);
        let mut found: Vec<(usize, usize)> = candidates
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                let key = c.match_key();
                if key.is_empty() {
                    None
                } else {
                    haystack.find(&key).map(|pos| (pos, i))
                }
            })
            .collect();
        found.sort_unstable();
        found.into_iter().map(|(_, i)| i).collect()
    }

    const CONTEXT_SEPARATOR: &'static str = "\n";
    const THOUGHT_SEPARATOR: &'static str = " ";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_mentions_follow_output_order() {
        let c = vec![
            KnowledgeTriple::new("a", "r", "b", "d1").unwrap(),
            KnowledgeTriple::new("b", "r", "c", "d2").unwrap(),
        ];
        let out = "<B; r; c>, <x; y; z>, <a;r;b>";
        assert_eq!(KnowledgeTriple::mentions(out, &c), vec![1, 0]);
    }

    #[test]
    fn text_mentions_by_position() {
        let c = vec![
            TextUnit {
                text: "Boston is a town.".into(),
                source_doc_id: "b".into(),
            },
            TextUnit {
                text: "Kirton End is a hamlet.".into(),
                source_doc_id: "k".into(),
            },
        ];
        let out = "Kirton  End is a hamlet. Boston is a town. So the answer is x.";
        assert_eq!(TextUnit::mentions(out, &c), vec![1, 0]);
    }
}
