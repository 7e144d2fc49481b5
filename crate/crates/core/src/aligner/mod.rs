//! Reasoning chain aligner: a bi-encoder that scores candidate units against
//! the iterative query.
//!
//! The encoder is a frozen embedding backend followed by a trainable square
//! projection and re-normalization, `f(x) = normalize(P · embed(x))`. With
//! `P = I` the model is exactly the frozen encoder.

mod data;
mod loss;
mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::data::{
    build_silver_data, decompose_chain, enumerate_candidate_chains, load_examples, save_examples,
    DecomposeOutcome, NegativeSource, SilverConfig, SilverOutcome, TrainingExample,
};
pub use self::loss::{contrastive_loss, projected_loss, LossGrad};
pub use self::train::{top1_accuracy, train_aligner, TrainConfig, TrainReport};
use crate::backends::{EmbedRole, Embedder};
use crate::corpus::KnowledgeTriple;
use crate::error::{Error, Result};
use crate::unit::ChainUnit;

/// A unit with its aligner score and the iteration (1-based) that scored it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored<U> {
    pub unit: U,
    pub score: f64,
    pub iteration: usize,
}

pub type ScoredTriple = Scored<KnowledgeTriple>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub backend: String,
    /// Fingerprint of the training configuration, absent for an untrained model.
    #[serde(default)]
    pub train_fingerprint: Option<String>,
    #[serde(default)]
    pub config_fingerprint: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignerModel {
    dim: usize,
    projection: Vec<f64>,
    meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    dim: usize,
    projection: Vec<f64>,
    meta: ModelMeta,
}

const FORMAT_NAME: &str = "chainrag-aligner";
const FORMAT_VERSION: u32 = 1;

impl AlignerModel {
    pub fn identity(dim: usize, backend: impl Into<String>) -> Self {
        let mut projection = vec![0.0; dim * dim];
        for i in 0..dim {
            projection[i * dim + i] = 1.0;
        }
        Self {
            dim,
            projection,
            meta: ModelMeta {
                backend: backend.into(),
                ..Default::default()
            },
        }
    }

    pub fn from_projection(dim: usize, projection: Vec<f64>, meta: ModelMeta) -> Result<Self> {
        if projection.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                actual: projection.len(),
            });
        }
        Ok(Self {
            dim,
            projection,
            meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `dim x dim` projection.
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut ModelMeta {
        &mut self.meta
    }

    pub fn is_identity(&self) -> bool {
        self.projection.iter().enumerate().all(|(i, &x)| {
            let diagonal = i / self.dim == i % self.dim;
            x == if diagonal { 1.0 } else { 0.0 }
        })
    }

    /// `normalize(P x)` for an already-embedded vector.
    pub fn project(&self, raw: &[f32]) -> Vec<f64> {
        let x: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
        loss::project(&self.projection, self.dim, &x).0
    }

    pub fn encode(&self, embedder: &Embedder, texts: &[String], role: EmbedRole) -> Result<Vec<Vec<f64>>> {
        if embedder.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: embedder.dim(),
            });
        }
        Ok(embedder
            .embed(texts, role)?
            .iter()
            .map(|v| self.project(v))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            dim: self.dim,
            projection: self.projection.clone(),
            meta: self.meta.clone(),
        };
        serde_json::to_writer(BufWriter::new(File::create(path)?), &file)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if file.format != FORMAT_NAME || file.version != FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        Self::from_projection(file.dim, file.projection, file.meta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scores each unit against `query`, preserving input order.
pub fn score_units<U: ChainUnit>(
    model: &AlignerModel,
    embedder: &Embedder,
    query: &str,
    units: &[U],
    iteration: usize,
) -> Result<Vec<Scored<U>>> {
    if units.is_empty() {
        return Ok(Vec::new());
    }
    let q = model.encode(embedder, &[query.to_string()], EmbedRole::Query)?;
    let texts: Vec<String> = units.iter().map(ChainUnit::render).collect();
    let encoded = model.encode(embedder, &texts, EmbedRole::Passage)?;
    Ok(units
        .iter()
        .zip(encoded)
        .map(|(unit, v)| Scored {
            unit: unit.clone(),
            score: dot(&q[0], &v),
            iteration,
        })
        .collect())
}

pub fn score_triples(
    model: &AlignerModel,
    embedder: &Embedder,
    query: &str,
    triples: &[KnowledgeTriple],
    iteration: usize,
) -> Result<Vec<ScoredTriple>> {
    score_units(model, embedder, query, triples, iteration)
}

/// Top `n` by descending score; equal scores keep input order.
pub fn select_candidates<U>(mut scored: Vec<Scored<U>>, n: usize) -> Vec<Scored<U>> {
    scored.sort_by(|a, b| crate::score_cmp(b.score, a.score));
    scored.truncate(n);
    scored
}
