use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::metrics::{attainable_recall, em, f1, per_step_recall, recall_at_k};
use crate::error::{Error, Result};
use crate::pipeline::{answer, run_granularity_variant, single_shot_ranking, Granularity, PipelineConfig, Stores};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

const RECALL_NOTE: &str = "R@K = |gold ∩ top-K| / |gold| per question, averaged over questions without errors. \
Per-step recall: 1 if the gold document of that hop is in the top-k of the final ranking; \
the trace column asks whether it was retrieved by that iteration.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalExample {
    pub question: String,
    pub gold_doc_ids: Vec<String>,
    #[serde(default)]
    pub gold_order_known: bool,
    pub answers: Vec<String>,
}

pub fn load_dataset(path: &Path) -> Result<Vec<EvalExample>> {
    let file = fs::File::open(path)?;
    let origin = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let load_err = |message: String| Error::Load {
            path: origin.clone(),
            line: i + 1,
            message,
        };
        let ex: EvalExample = serde_json::from_str(&line).map_err(|e| load_err(e.to_string()))?;
        if ex.gold_doc_ids.is_empty() {
            return Err(load_err("gold_doc_ids is empty".into()));
        }
        if ex.answers.is_empty() {
            return Err(load_err("answers is empty".into()));
        }
        out.push(ex);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub recall_ks: Vec<usize>,
    pub per_step_k: usize,
    /// Run the reader and compute EM/F1.
    pub answers: bool,
    /// Also evaluate one-shot dense retrieval with the bare question.
    pub single_shot: bool,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            recall_ks: vec![3, 5],
            per_step_k: 3,
            answers: true,
            single_shot: true,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub ranking: Vec<String>,
    pub recall: BTreeMap<String, f64>,
    /// Per hop, `None` when the gold order is unknown.
    pub per_step: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub id: usize,
    pub question: String,
    pub gold_doc_ids: Vec<String>,
    pub attainable: BTreeMap<String, f64>,
    pub error: Option<String>,
    pub chained: Option<MethodRow>,
    pub per_step_trace: Vec<Option<f64>>,
    pub iterations: usize,
    pub chain: Vec<String>,
    pub ranking_fallback: bool,
    pub answer: Option<String>,
    pub em: Option<f64>,
    pub f1: Option<f64>,
    pub single_shot: Option<MethodRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMean {
    pub step: usize,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub recall: BTreeMap<String, f64>,
    pub per_step: Vec<StepMean>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub config_fingerprint: String,
    pub granularity: Granularity,
    pub recall_definition: String,
    pub questions: usize,
    pub errors: usize,
    /// Questions whose gold order is unknown, so per-step recall is skipped.
    pub per_step_skipped: usize,
    pub chained: MethodSummary,
    pub per_step_trace: Vec<StepMean>,
    pub em: Option<f64>,
    pub f1: Option<f64>,
    pub single_shot: Option<MethodSummary>,
    pub rows: Vec<QuestionRow>,
}

fn recall_key(k: usize) -> String {
    format!("R@{k}")
}

fn method_row(ranking: Vec<String>, ex: &EvalExample, opts: &EvalOptions) -> MethodRow {
    let recall = opts
        .recall_ks
        .iter()
        .map(|&k| (recall_key(k), recall_at_k(&ranking, &ex.gold_doc_ids, k)))
        .collect();
    let per_step = (1..=ex.gold_doc_ids.len())
        .map(|step| {
            ex.gold_order_known
                .then(|| per_step_recall(&ranking, &ex.gold_doc_ids, step, opts.per_step_k))
                .flatten()
        })
        .collect();
    MethodRow {
        ranking,
        recall,
        per_step,
    }
}

/// 1 if the hop's gold document was among the retrieved documents of any
/// iteration up to that hop.
fn trace_step_recall(retrieved: &[Vec<String>], gold: &str, step: usize) -> f64 {
    let hit = retrieved.iter().take(step).any(|ids| ids.iter().any(|d| d == gold));
    if hit {
        1.0
    } else {
        0.0
    }
}

fn evaluate_one(
    id: usize,
    ex: &EvalExample,
    config: &PipelineConfig,
    stores: &Stores,
    opts: &EvalOptions,
) -> QuestionRow {
    let attainable = opts
        .recall_ks
        .iter()
        .map(|&k| (recall_key(k), attainable_recall(ex.gold_doc_ids.len(), k)))
        .collect();
    let mut row = QuestionRow {
        id,
        question: ex.question.clone(),
        gold_doc_ids: ex.gold_doc_ids.clone(),
        attainable,
        error: None,
        chained: None,
        per_step_trace: Vec::new(),
        iterations: 0,
        chain: Vec::new(),
        ranking_fallback: false,
        answer: None,
        em: None,
        f1: None,
        single_shot: None,
    };
    let depth = opts
        .recall_ks
        .iter()
        .copied()
        .chain([opts.per_step_k, config.final_docs])
        .max()
        .unwrap_or(config.final_docs);

    let outcome = (|| -> Result<()> {
        let trace = run_granularity_variant(&ex.question, config, stores)?;
        let (ranked, fallback) = trace.ranking(depth);
        let ranking: Vec<String> = ranked.into_iter().map(|d| d.doc_id).collect();
        let retrieved = trace.retrieved_per_iteration();
        row.per_step_trace = ex
            .gold_doc_ids
            .iter()
            .enumerate()
            .map(|(i, g)| ex.gold_order_known.then(|| trace_step_recall(&retrieved, g, i + 1)))
            .collect();
        row.iterations = trace.iteration_count();
        row.chain = trace.chain();
        row.ranking_fallback = fallback;
        if opts.answers {
            let top: Vec<String> = ranking.iter().take(config.final_docs).cloned().collect();
            let predicted = answer(&ex.question, &top, config, stores)?;
            row.em = Some(em(&predicted, &ex.answers));
            row.f1 = Some(f1(&predicted, &ex.answers));
            row.answer = Some(predicted);
        }
        row.chained = Some(method_row(ranking, ex, opts));
        if opts.single_shot {
            let base = single_shot_ranking(&ex.question, depth, stores)?;
            row.single_shot = Some(method_row(base.into_iter().map(|d| d.doc_id).collect(), ex, opts));
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        warn!(question = id, error = %e, "evaluation failed for question");
        row.error = Some(e.to_string());
        row.chained = None;
        row.single_shot = None;
        row.em = None;
        row.f1 = None;
    }
    row
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn step_means<'a>(per_question: impl Iterator<Item = &'a [Option<f64>]> + Clone) -> Vec<StepMean> {
    let depth = per_question.clone().map(<[_]>::len).max().unwrap_or(0);
    (1..=depth)
        .filter_map(|step| {
            let vals: Vec<f64> = per_question
                .clone()
                .filter_map(|v| v.get(step - 1).copied().flatten())
                .collect();
            mean(vals.iter().copied()).map(|m| StepMean {
                step,
                mean: m,
                count: vals.len(),
            })
        })
        .collect()
}

fn summarize<'a>(rows: impl Iterator<Item = &'a MethodRow> + Clone, ks: &[usize]) -> MethodSummary {
    let recall = ks
        .iter()
        .map(|&k| {
            let key = recall_key(k);
            let m = mean(rows.clone().filter_map(|r| r.recall.get(&key).copied())).unwrap_or(0.0);
            (key, m)
        })
        .collect();
    MethodSummary {
        recall,
        per_step: step_means(rows.map(|r| r.per_step.as_slice())),
    }
}

/// Runs every question (in parallel), then aggregates in question order.
/// Failed questions are kept as rows with an error and left out of means.
pub fn evaluate_run(
    dataset: &[EvalExample],
    config: &PipelineConfig,
    stores: &Stores,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("evaluation dataset is empty".into()));
    }
    if opts.recall_ks.is_empty() || opts.recall_ks.contains(&0) || opts.per_step_k == 0 {
        return Err(Error::InvalidArgument("recall cutoffs must be >= 1".into()));
    }
    config.validate()?;
    stores.check()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let rows: Vec<QuestionRow> = pool.install(|| {
        dataset
            .par_iter()
            .enumerate()
            .map(|(i, ex)| evaluate_one(i, ex, config, stores, opts))
            .collect()
    });

    let ok: Vec<&QuestionRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let chained = summarize(ok.iter().filter_map(|r| r.chained.as_ref()), &opts.recall_ks);
    let single_shot = opts
        .single_shot
        .then(|| summarize(ok.iter().filter_map(|r| r.single_shot.as_ref()), &opts.recall_ks));
    let per_step_trace = step_means(ok.iter().map(|r| r.per_step_trace.as_slice()));
    let per_step_skipped = dataset.iter().filter(|e| !e.gold_order_known).count();

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config_fingerprint: stores.fingerprint.clone(),
        granularity: config.granularity,
        recall_definition: RECALL_NOTE.to_string(),
        questions: rows.len(),
        errors: rows.len() - ok.len(),
        per_step_skipped,
        chained,
        per_step_trace,
        em: mean(ok.iter().filter_map(|r| r.em)),
        f1: mean(ok.iter().filter_map(|r| r.f1)),
        single_shot,
        rows,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", v * 100.0))
}

pub fn render_markdown(report: &EvalReport) -> String {
    let ks: Vec<&String> = report.chained.recall.keys().collect();
    let mut md = String::new();
    let _ = writeln!(md, "# Evaluation report\n");
    let _ = writeln!(
        md,
        "config `{}`, granularity {:?}, {} questions, {} errors\n",
        report.config_fingerprint, report.granularity, report.questions, report.errors
    );
    let _ = writeln!(md, "{}\n", report.recall_definition);

    let header: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
    let _ = writeln!(md, "| Method | {} | EM | F1 |", header.join(" | "));
    let _ = writeln!(md, "|---|{}---|---|", "---|".repeat(ks.len()));
    let cells = |s: &MethodSummary| -> Vec<String> { ks.iter().map(|k| pct(s.recall.get(*k).copied())).collect() };
    let _ = writeln!(
        md,
        "| Iterative chain | {} | {} | {} |",
        cells(&report.chained).join(" | "),
        pct(report.em),
        pct(report.f1)
    );
    if let Some(s) = &report.single_shot {
        let _ = writeln!(md, "| Single-shot | {} | - | - |", cells(s).join(" | "));
    }

    let _ = writeln!(md, "\n## Per-step recall\n");
    let _ = writeln!(md, "| Step | Iterative chain | Single-shot | Retrieved by iteration |");
    let _ = writeln!(md, "|---|---|---|---|");
    let lookup = |v: &[StepMean], step: usize| v.iter().find(|m| m.step == step).map(|m| m.mean);
    for m in &report.chained.per_step {
        let base = report.single_shot.as_ref().and_then(|s| lookup(&s.per_step, m.step));
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} |",
            m.step,
            pct(Some(m.mean)),
            pct(base),
            pct(lookup(&report.per_step_trace, m.step))
        );
    }
    md
}

/// Writes `report.json` and `report.md` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    fs::write(dir.join("report.md"), render_markdown(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_means_skip_missing() {
        let a = vec![Some(1.0), Some(0.0)];
        let b = vec![Some(1.0)];
        let c = vec![None, None];
        let m = step_means([a.as_slice(), b.as_slice(), c.as_slice()].into_iter());
        assert_eq!(m, vec![
            StepMean {
                step: 1,
                mean: 1.0,
                count: 2
            },
            StepMean {
                step: 2,
                mean: 0.0,
                count: 1
            },
        ]);
    }

    #[test]
    fn trace_recall_counts_earlier_iterations() {
        let r = vec![vec!["a".to_string()], vec!["b".to_string()]];
        assert_eq!(trace_step_recall(&r, "b", 1), 0.0);
        assert_eq!(trace_step_recall(&r, "b", 2), 1.0);
        assert_eq!(trace_step_recall(&r, "a", 2), 1.0);
    }

    #[test]
    fn dataset_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, "{\"question\":\"q\",\"gold_doc_ids\":[],\"answers\":[\"a\"]}\n").unwrap();
        assert!(matches!(load_dataset(&p), Err(Error::Load { line: 1, .. })));
        fs::write(
            &p,
            "{\"question\":\"q\",\"gold_doc_ids\":[\"d\"],\"gold_order_known\":true,\"answers\":[\"a\"]}\n\n",
        )
        .unwrap();
        assert_eq!(load_dataset(&p).unwrap().len(), 1);
    }
}
