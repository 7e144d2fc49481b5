//! Subcommand definitions and their implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chainrag::aligner::{build_silver_data, save_examples, train_aligner, load_examples, NegativeSource};
use chainrag::corpus::{extract_corpus, ExtractionCache};
use chainrag::eval::{evaluate_run, load_dataset, write_report};
use chainrag::index::build_index;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::app::{build_chat, build_embedder, load_documents, load_index, load_prompts, load_stores};
use crate::config::{LoadedConfig, NegativeSourceKind};
use crate::error::CliError;
use crate::payload::{answer_payload, retrieve_payload};
use crate::service::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "chainrag", version, about = "Iterative retrieval over knowledge-triple reasoning chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract knowledge triples for every corpus document (resumable).
    Extract(ConfigArg),
    /// Embed the corpus into a dense index.
    Index(ConfigArg),
    /// Build aligner training examples from a QA set.
    BuildSilver {
        #[command(flatten)]
        config: ConfigArg,
        /// QA pairs, one JSON object per line (same format as eval datasets).
        #[arg(long)]
        qa: PathBuf,
        /// Output file; defaults to paths.examples.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the aligner projection.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Training examples; defaults to paths.examples.
        #[arg(long)]
        examples: Option<PathBuf>,
        /// Output model; defaults to paths.model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrieve documents for one question or a dataset.
    Retrieve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
        question: Option<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Documents to return; defaults to pipeline.final_docs.
        #[arg(long)]
        k: Option<usize>,
        /// Write full traces here (JSON, or JSON lines for a dataset).
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Answer one question.
    Answer {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        question: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate on a dataset and write report.json and report.md.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        /// Report directory; defaults to paths.reports, then ./reports.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Serve /retrieve, /answer and /healthz over HTTP.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides service.bind.
        #[arg(long)]
        bind: Option<String>,
    },
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn k_or_default(k: Option<usize>, cfg: &LoadedConfig) -> Result<usize, CliError> {
    match k {
        Some(0) => Err(CliError::Usage("--k must be >= 1".into())),
        Some(k) => Ok(k),
        None => Ok(cfg.config.pipeline.final_docs),
    }
}

fn extract(cfg: &LoadedConfig) -> Result<(), CliError> {
    let docs = load_documents(cfg)?;
    let kg_path = cfg.required("kg", &cfg.config.paths.kg)?;
    let chat = build_chat(cfg, "extraction", &cfg.config.chat.extraction)?;
    let prompts = load_prompts(cfg)?;
    let cache = ExtractionCache::open_append(&kg_path)?;
    let stats = extract_corpus(docs.documents(), chat.as_ref(), &cache, &prompts.extraction, cfg.config.workers)?;
    print_json(&json!({
        "documents": stats.documents,
        "cached": stats.cached,
        "extracted": stats.extracted,
        "empty": stats.empty,
        "failed": stats.failed.len(),
        "kg": kg_path,
    }));
    if let Some((doc_id, message)) = stats.failed.first() {
        return Err(CliError::Extraction(format!(
            "{} documents failed (first: {doc_id}: {message}); rerun to retry them",
            stats.failed.len()
        )));
    }
    Ok(())
}

fn index(cfg: &LoadedConfig) -> Result<(), CliError> {
    let docs = load_documents(cfg)?;
    let embedder = build_embedder(cfg)?;
    let path = cfg.required("index", &cfg.config.paths.index)?;
    let index = build_index(docs.documents(), &embedder)?;
    index.save(&path)?;
    print_json(&json!({ "documents": index.len(), "dim": index.dim(), "index": path }));
    Ok(())
}

fn build_silver(cfg: &LoadedConfig, qa: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let c = &cfg.config;
    let out = match out {
        Some(p) => p,
        None => cfg.required("examples", &c.paths.examples)?,
    };
    let dataset = load_dataset(qa)?;
    let kg = chainrag::corpus::KgCorpus::load(&cfg.required("kg", &c.paths.kg)?)?;
    let reader = build_chat(cfg, "reader", &c.chat.reader)?;
    let prompts = load_prompts(cfg)?;
    let silver = c.silver.config();

    let (embedder, index) = match c.silver.negative_source {
        NegativeSourceKind::GoldDocs => (None, None),
        NegativeSourceKind::Retrieved => {
            let e = build_embedder(cfg)?;
            let i = load_index(cfg, &e)?;
            (Some(e), Some(i))
        }
    };
    let negatives = match (&index, &embedder) {
        (Some(index), Some(embedder)) => NegativeSource::Retrieved {
            index,
            embedder,
            docs_per_query: c.silver.docs_per_query,
        },
        _ => NegativeSource::GoldDocs,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.workers.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let outcomes: Vec<_> = pool.install(|| {
        dataset
            .par_iter()
            .map(|ex| {
                build_silver_data(
                    &ex.question,
                    &ex.gold_doc_ids,
                    &ex.answers,
                    reader.as_ref(),
                    &prompts.reader,
                    &kg,
                    &negatives,
                    &silver,
                )
            })
            .collect()
    });

    let mut examples = Vec::new();
    let (mut accepted, mut failed, mut skipped) = (0usize, 0usize, 0usize);
    for outcome in outcomes {
        match outcome {
            Ok(Some(o)) => {
                accepted += 1;
                skipped += o.skipped;
                examples.extend(o.examples);
            }
            Ok(None) => {}
            Err(e) => {
                failed += 1;
                tracing::warn!(error = %e, "silver data construction failed for a question");
            }
        }
    }
    save_examples(&examples, File::create(&out)?)?;
    print_json(&json!({
        "questions": dataset.len(),
        "accepted": accepted,
        "failed": failed,
        "examples": examples.len(),
        "skipped_prefixes": skipped,
        "out": out,
    }));
    Ok(())
}

fn train(cfg: &LoadedConfig, examples: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), CliError> {
    let c = &cfg.config;
    let examples_path = match examples {
        Some(p) => p,
        None => cfg.required("examples", &c.paths.examples)?,
    };
    let out = match out {
        Some(p) => p,
        None => cfg.required("model", &c.paths.model)?,
    };
    let embedder = build_embedder(cfg)?;
    let data = load_examples(&examples_path)?;
    let start = chainrag::aligner::AlignerModel::identity(embedder.dim(), embedder.describe());
    let (mut model, report) = train_aligner(&start, &embedder, &data, &c.train)?;
    model.meta_mut().config_fingerprint = Some(cfg.fingerprint.clone());
    model.save(&out)?;
    print_json(&json!({
        "examples": data.len(),
        "steps": report.steps,
        "epoch_losses": report.epoch_losses,
        "model": out,
    }));
    Ok(())
}

fn retrieve(
    cfg: &LoadedConfig,
    question: Option<String>,
    dataset: Option<PathBuf>,
    k: Option<usize>,
    traces: Option<PathBuf>,
) -> Result<(), CliError> {
    let k = k_or_default(k, cfg)?;
    let stores = load_stores(cfg)?;
    let pipeline = &cfg.config.pipeline;
    if let Some(q) = question {
        let (payload, trace) = retrieve_payload(&stores, pipeline, &q, k)?;
        println!("{}", serde_json::to_string(&payload)?);
        if let Some(path) = traces {
            write_json_file(&path, &trace)?;
        }
        return Ok(());
    }
    let dataset = dataset.ok_or_else(|| CliError::Usage("either --question or --dataset is required".into()))?;
    let data = load_dataset(&dataset)?;
    let mut trace_out = traces.map(|p| File::create(p).map(BufWriter::new)).transpose()?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for ex in &data {
        let (payload, trace) = retrieve_payload(&stores, pipeline, &ex.question, k)?;
        writeln!(lock, "{}", serde_json::to_string(&payload)?)?;
        if let Some(w) = trace_out.as_mut() {
            serde_json::to_writer(&mut *w, &trace)?;
            w.write_all(b"\n")?;
        }
    }
    if let Some(mut w) = trace_out {
        w.flush()?;
    }
    Ok(())
}

fn answer(cfg: &LoadedConfig, question: &str, k: Option<usize>, trace_path: Option<PathBuf>) -> Result<(), CliError> {
    let k = k_or_default(k, cfg)?;
    let stores = load_stores(cfg)?;
    let (payload, trace) = answer_payload(&stores, &cfg.config.pipeline, question, k)?;
    println!("{}", serde_json::to_string(&payload)?);
    if let Some(path) = trace_path {
        write_json_file(&path, &trace)?;
    }
    Ok(())
}

fn eval(cfg: &LoadedConfig, dataset: &Path, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = out_dir
        .or_else(|| cfg.config.paths.reports.as_deref().map(|p| cfg.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("reports"));
    let data = load_dataset(dataset)?;
    let stores = load_stores(cfg)?;
    let report = evaluate_run(&data, &cfg.config.pipeline, &stores, &cfg.config.eval)?;
    write_report(&report, &out_dir)?;
    print_json(&json!({
        "questions": report.questions,
        "errors": report.errors,
        "recall": report.chained.recall,
        "em": report.em,
        "f1": report.f1,
        "report": out_dir.join("report.json"),
    }));
    Ok(())
}

fn run_service(cfg: &LoadedConfig, bind: Option<String>) -> Result<(), CliError> {
    let bind = bind.unwrap_or_else(|| cfg.config.service.bind.clone());
    let state = Arc::new(AppState {
        stores: load_stores(cfg)?,
        pipeline: cfg.config.pipeline.clone(),
    });
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        serve(state, listener).await
    })?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let load = |c: &ConfigArg| LoadedConfig::load(&c.config);
    match cli.command {
        Command::Extract(c) => extract(&load(&c)?),
        Command::Index(c) => index(&load(&c)?),
        Command::BuildSilver { config, qa, out } => build_silver(&load(&config)?, &qa, out),
        Command::Train { config, examples, out } => train(&load(&config)?, examples, out),
        Command::Retrieve {
            config,
            question,
            dataset,
            k,
            traces,
        } => retrieve(&load(&config)?, question, dataset, k, traces),
        Command::Answer {
            config,
            question,
            k,
            trace,
        } => answer(&load(&config)?, &question, k, trace),
        Command::Eval {
            config,
            dataset,
            out_dir,
        } => eval(&load(&config)?, &dataset, out_dir),
        Command::Serve { config, bind } => run_service(&load(&config)?, bind),
    }
}
