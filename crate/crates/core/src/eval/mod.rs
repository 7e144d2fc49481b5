//! Retrieval and QA metrics and the dataset evaluation harness.

mod harness;
mod metrics;

pub use self::harness::{
    evaluate_run, load_dataset, render_markdown, write_report, EvalExample, EvalOptions, EvalReport, MethodRow,
    MethodSummary, QuestionRow, StepMean, REPORT_SCHEMA_VERSION,
};
pub use self::metrics::{attainable_recall, em, exact_match, f1, normalize_answer, per_step_recall, recall_at_k};
