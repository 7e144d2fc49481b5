//! Builds backends and loads the stores a command needs.

use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use chainrag::aligner::AlignerModel;
use chainrag::backends::{ChatBackend, EmbedBackend, Embedder, HashEmbedder, HttpChat, HttpEmbedder, ScriptedChat};
use chainrag::corpus::{ingest_documents, DocumentStore, DuplicatePolicy, ExtractionCache, KgCorpus};
use chainrag::index::DenseIndex;
use chainrag::pipeline::{OnlineExtraction, Stores};
use chainrag::prompts::{PromptSet, PromptTemplate};

use crate::config::{ChatConfig, EmbeddingConfig, LoadedConfig};
use crate::error::CliError;

fn api_key(env: &Option<String>) -> Result<Option<String>, CliError> {
    match env {
        None => Ok(None),
        Some(name) => std::env::var(name)
            .map(Some)
            .map_err(|_| CliError::Config(format!("environment variable {name} is not set"))),
    }
}

pub fn build_embedder(cfg: &LoadedConfig) -> Result<Embedder, CliError> {
    let backend: Arc<dyn EmbedBackend> = match &cfg.config.embedding {
        EmbeddingConfig::Hash { dim, seed } => {
            if *dim < 2 {
                return Err(CliError::Config("embedding.dim must be >= 2".into()));
            }
            Arc::new(HashEmbedder::new(*dim, *seed))
        }
        EmbeddingConfig::Http {
            base_url,
            model,
            dim,
            api_key_env,
            retry,
        } => Arc::new(HttpEmbedder::new(base_url, model, *dim, api_key(api_key_env)?).with_retry(retry.policy())),
    };
    Ok(Embedder::new(backend).with_prefixes(cfg.config.prefixes.clone()))
}

pub fn build_chat(cfg: &LoadedConfig, role: &str, section: &Option<ChatConfig>) -> Result<Arc<dyn ChatBackend>, CliError> {
    match section {
        None => Err(CliError::Config(format!("chat.{role} is not configured"))),
        Some(ChatConfig::Scripted { script, mode }) => {
            Ok(Arc::new(ScriptedChat::from_file(&cfg.resolve(script), *mode)?))
        }
        Some(ChatConfig::Http {
            base_url,
            model,
            api_key_env,
            retry,
        }) => Ok(Arc::new(
            HttpChat::new(base_url, model, api_key(api_key_env)?).with_retry(retry.policy()),
        )),
    }
}

pub fn load_prompts(cfg: &LoadedConfig) -> Result<PromptSet, CliError> {
    let mut set = PromptSet::default();
    let p = &cfg.config.prompts;
    for (path, slot) in [
        (&p.extraction, &mut set.extraction),
        (&p.constructor, &mut set.constructor),
        (&p.reader, &mut set.reader),
    ] {
        if let Some(path) = path {
            *slot = PromptTemplate::from_file(&cfg.resolve(path))?;
        }
    }
    Ok(set)
}

pub fn load_documents(cfg: &LoadedConfig) -> Result<DocumentStore, CliError> {
    let path = cfg.required("corpus", &cfg.config.paths.corpus)?;
    let file = File::open(&path).map_err(|e| CliError::Config(format!("cannot open corpus {}: {e}", path.display())))?;
    let (store, _) = ingest_documents(BufReader::new(file), DuplicatePolicy::Reject)?;
    Ok(store)
}

pub fn load_index(cfg: &LoadedConfig, embedder: &Embedder) -> Result<DenseIndex, CliError> {
    let path = cfg.required("index", &cfg.config.paths.index)?;
    let index = DenseIndex::load(&path)?;
    if index.meta().backend != embedder.describe() {
        return Err(CliError::Config(format!(
            "index was built with {:?} but the config uses {:?}; rebuild it with `index`",
            index.meta().backend,
            embedder.describe()
        )));
    }
    Ok(index)
}

pub fn load_model(cfg: &LoadedConfig, embedder: &Embedder) -> Result<AlignerModel, CliError> {
    match &cfg.config.paths.model {
        Some(p) => Ok(AlignerModel::load(&cfg.resolve(p))?),
        None => Ok(AlignerModel::identity(embedder.dim(), embedder.describe())),
    }
}

/// Everything retrieval needs: corpus, index, KG, aligner, constructor and
/// reader backends.
pub fn load_stores(cfg: &LoadedConfig) -> Result<Stores, CliError> {
    let embedder = build_embedder(cfg)?;
    let c = &cfg.config;
    let extraction = if c.pipeline.online_extraction {
        Some(OnlineExtraction {
            chat: build_chat(cfg, "extraction", &c.chat.extraction)?,
            cache: ExtractionCache::in_memory(KgCorpus::new()),
        })
    } else {
        None
    };
    let stores = Stores {
        documents: load_documents(cfg)?,
        index: load_index(cfg, &embedder)?,
        kg: KgCorpus::load(&cfg.required("kg", &c.paths.kg)?)?,
        model: load_model(cfg, &embedder)?,
        constructor: build_chat(cfg, "constructor", &c.chat.constructor)?,
        reader: build_chat(cfg, "reader", &c.chat.reader)?,
        extraction,
        prompts: load_prompts(cfg)?,
        fingerprint: cfg.fingerprint.clone(),
        embedder,
    };
    stores.check()?;
    Ok(stores)
}
