//! Run configuration: one TOML file holds everything that affects results.
//! Relative paths are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use chainrag::aligner::{SilverConfig, TrainConfig};
use chainrag::backends::{EmbedPrefixes, MatchMode, RetryPolicy};
use chainrag::eval::EvalOptions;
use chainrag::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub kg: Option<PathBuf>,
    pub index: Option<PathBuf>,
    /// Trained aligner; the untrained (identity) aligner is used when unset.
    pub model: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Hash {
        dim: usize,
        #[serde(default = "default_hash_seed")]
        seed: u64,
    },
    Http {
        base_url: String,
        model: String,
        dim: usize,
        /// Name of the environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        retry: RetryConfig,
    },
}

fn default_hash_seed() -> u64 {
    7
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Hash { dim: 256, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        let d = RetryPolicy::default();
        Self {
            max_attempts: d.max_attempts,
            initial_backoff_ms: d.initial_backoff.as_millis() as u64,
            max_backoff_ms: d.max_backoff.as_millis() as u64,
        }
    }
}

impl RetryConfig {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts.max(1),
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            max_backoff: Duration::from_millis(self.max_backoff_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChatConfig {
    Scripted {
        script: PathBuf,
        #[serde(default)]
        mode: MatchMode,
    },
    Http {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        retry: RetryConfig,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChatSection {
    pub constructor: Option<ChatConfig>,
    pub reader: Option<ChatConfig>,
    pub extraction: Option<ChatConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptPaths {
    pub extraction: Option<PathBuf>,
    pub constructor: Option<PathBuf>,
    pub reader: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSourceKind {
    #[default]
    GoldDocs,
    Retrieved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SilverSection {
    pub max_candidates: usize,
    pub max_chain_len: usize,
    pub negatives: usize,
    pub seed: u64,
    pub reader_max_tokens: u32,
    pub negative_source: NegativeSourceKind,
    /// Documents retrieved per prefix query for retrieved negatives.
    pub docs_per_query: usize,
}

impl Default for SilverSection {
    fn default() -> Self {
        let d = SilverConfig::default();
        Self {
            max_candidates: d.max_candidates,
            max_chain_len: d.max_chain_len,
            negatives: d.negatives,
            seed: d.seed,
            reader_max_tokens: d.reader_max_tokens,
            negative_source: NegativeSourceKind::GoldDocs,
            docs_per_query: 10,
        }
    }
}

impl SilverSection {
    pub fn config(&self) -> SilverConfig {
        SilverConfig {
            max_candidates: self.max_candidates,
            max_chain_len: self.max_chain_len,
            negatives: self.negatives,
            seed: self.seed,
            reader_max_tokens: self.reader_max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceSection {
    pub bind: String,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub embedding: EmbeddingConfig,
    pub prefixes: EmbedPrefixes,
    pub chat: ChatSection,
    pub prompts: PromptPaths,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub silver: SilverSection,
    pub eval: EvalOptions,
    pub service: ServiceSection,
    /// Threads for extraction and silver-data construction.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            embedding: EmbeddingConfig::default(),
            prefixes: EmbedPrefixes::default(),
            chat: ChatSection::default(),
            prompts: PromptPaths::default(),
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            silver: SilverSection::default(),
            eval: EvalOptions::default(),
            service: ServiceSection::default(),
            workers: 4,
        }
    }
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub fingerprint: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        config.pipeline.validate()?;
        config.train.validate()?;
        Ok(config)
    }

    /// Hash of the config as written (relative paths unresolved), so a
    /// copied run directory keeps its fingerprint.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = RunConfig::from_toml(&text)?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let fingerprint = config.fingerprint();
        Ok(Self {
            config,
            base_dir,
            fingerprint,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The resolved path for a required `[paths]` entry.
    pub fn required(&self, name: &str, value: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        value
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| CliError::Config(format!("paths.{name} is not set")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_engine_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.pipeline, PipelineConfig::default());
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.pipeline.max_iterations, 5);
        assert_eq!(c.pipeline.docs_per_iteration, 10);
        assert_eq!(c.pipeline.candidates_per_iteration, 20);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[pipeline]\nmax_iteratons = 3").is_err());
        assert!(RunConfig::from_toml("[chat.reader]\nbackend = \"scripted\"\nscript = \"s.json\"\nextra = 1").is_err());
        assert!(RunConfig::from_toml("[silver]\nnegatives = 3\nbogus = 1").is_err());
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::from_toml(
            r#"
            [embedding]
            backend = "hash"
            dim = 64
            [chat.reader]
            backend = "scripted"
            script = "reader.json"
            mode = "substring"
            [silver]
            negatives = 3
            negative_source = "retrieved"
            [pipeline]
            final_docs = 3
            "#,
        )
        .unwrap();
        assert_eq!(c.embedding, EmbeddingConfig::Hash { dim: 64, seed: 7 });
        assert_eq!(c.silver.config().negatives, 3);
        assert_eq!(c.silver.negative_source, NegativeSourceKind::Retrieved);
        assert_eq!(c.pipeline.final_docs, 3);
        assert!(matches!(c.chat.reader, Some(ChatConfig::Scripted { mode: MatchMode::Substring, .. })));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[pipeline]\nmax_iterations = 0").is_err());
        assert!(RunConfig::from_toml("[train]\ntemperature = 0.0").is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = RunConfig::from_toml("").unwrap();
        let b = RunConfig::from_toml("[pipeline]\nfinal_docs = 3").unwrap();
        assert_eq!(a.fingerprint(), RunConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }
}
