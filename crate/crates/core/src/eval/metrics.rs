use std::collections::{HashMap, HashSet};

/// |gold ∩ top-k| / |gold|. Gold ids are treated as a set.
pub fn recall_at_k<S: AsRef<str>, G: AsRef<str>>(ranked: &[S], gold: &[G], k: usize) -> f64 {
    let gold: HashSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    if gold.is_empty() {
        return 0.0;
    }
    let top: HashSet<&str> = ranked.iter().take(k).map(AsRef::as_ref).collect();
    gold.intersection(&top).count() as f64 / gold.len() as f64
}

/// Best recall attainable at `k` when the gold set is larger than `k`.
pub fn attainable_recall(gold_count: usize, k: usize) -> f64 {
    if gold_count == 0 {
        0.0
    } else {
        (k.min(gold_count)) as f64 / gold_count as f64
    }
}

/// 1 if the gold document for 1-based `step` is in the top `k`; `None` when
/// there are fewer than `step` gold documents.
pub fn per_step_recall<S: AsRef<str>, G: AsRef<str>>(
    ranked: &[S],
    ordered_gold: &[G],
    step: usize,
    k: usize,
) -> Option<f64> {
    if step == 0 || ordered_gold.len() < step {
        return None;
    }
    let target = ordered_gold[step - 1].as_ref();
    let hit = ranked.iter().take(k).any(|d| d.as_ref() == target);
    Some(if hit { 1.0 } else { 0.0 })
}

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match<G: AsRef<str>>(prediction: &str, gold_answers: &[G]) -> bool {
    let p = normalize_answer(prediction);
    gold_answers.iter().any(|g| normalize_answer(g.as_ref()) == p)
}

pub fn em<G: AsRef<str>>(prediction: &str, gold_answers: &[G]) -> f64 {
    if exact_match(prediction, gold_answers) {
        1.0
    } else {
        0.0
    }
}

fn token_f1(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pt.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-level F1 on normalized text, maximised over gold answers.
pub fn f1<G: AsRef<str>>(prediction: &str, gold_answers: &[G]) -> f64 {
    gold_answers
        .iter()
        .map(|g| token_f1(prediction, g.as_ref()))
        .fold(0.0, f64::max)
}
