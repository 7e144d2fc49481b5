use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::aligner::Scored;
use crate::index::SearchHit;
use crate::unit::ChainUnit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument<U> {
    pub doc_id: String,
    pub score: f64,
    /// Unit that produced the score; absent for plain search results.
    pub best_unit: Option<U>,
    pub iteration: usize,
}

fn rank_order<U>(a: &RankedDocument<U>, b: &RankedDocument<U>) -> Ordering {
    crate::score_cmp(b.score, a.score)
        .then(a.iteration.cmp(&b.iteration))
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Groups units by source document, scores each document by its best unit
/// and returns the top `k`. Ties go to the earlier iteration, then to the
/// smaller doc id. Within a document the first unit with the maximum score
/// is kept.
pub fn rank_documents<U: ChainUnit>(units: &[Scored<U>], k: usize) -> Vec<RankedDocument<U>> {
    let mut best: HashMap<&str, &Scored<U>> = HashMap::new();
    for s in units {
        let doc = s.unit.source_doc_id();
        match best.get(doc) {
            Some(cur) if cur.score >= s.score => {}
            _ => {
                best.insert(doc, s);
            }
        }
    }
    let mut ranked: Vec<RankedDocument<U>> = best
        .into_iter()
        .map(|(doc_id, s)| RankedDocument {
            doc_id: doc_id.to_string(),
            score: s.score,
            best_unit: Some(s.unit.clone()),
            iteration: s.iteration,
        })
        .collect();
    ranked.sort_by(rank_order);
    ranked.truncate(k);
    ranked
}

/// Plain search results as a ranking (iteration 1, no unit).
pub fn hits_as_ranking<U>(hits: &[SearchHit], k: usize) -> Vec<RankedDocument<U>> {
    hits.iter()
        .take(k)
        .map(|h| RankedDocument {
            doc_id: h.doc_id.clone(),
            score: h.score,
            best_unit: None,
            iteration: 1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::KnowledgeTriple;

    fn s(doc: &str, score: f64, iteration: usize) -> Scored<KnowledgeTriple> {
        Scored {
            unit: KnowledgeTriple::new(format!("h{score}"), "r", "t", doc).unwrap(),
            score,
            iteration,
        }
    }

    #[test]
    fn max_then_sort() {
        let r = rank_documents(&[s("A", 0.9, 1), s("A", 0.2, 1), s("B", 0.5, 1)], 5);
        let got: Vec<_> = r.iter().map(|d| (d.doc_id.as_str(), d.score)).collect();
        assert_eq!(got, vec![("A", 0.9), ("B", 0.5)]);
    }

    #[test]
    fn ties_prefer_earlier_iteration_then_id() {
        let r = rank_documents(&[s("B", 0.5, 1), s("A", 0.5, 2)], 5);
        assert_eq!(r[0].doc_id, "B");
        let r = rank_documents(&[s("C", 0.5, 1), s("A", 0.5, 1)], 5);
        assert_eq!(r[0].doc_id, "A");
    }

    #[test]
    fn truncates_and_handles_empty() {
        let units: Vec<_> = (0..5).map(|i| s(&format!("d{i}"), i as f64, 1)).collect();
        assert_eq!(rank_documents(&units, 3).len(), 3);
        assert!(rank_documents::<KnowledgeTriple>(&[], 3).is_empty());
    }
}
