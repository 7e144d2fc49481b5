use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::info;

use super::data::TrainingExample;
use super::loss::{project, projected_loss_into};
use super::AlignerModel;
use crate::backends::{EmbedRole, Embedder};
use crate::error::{Error, Result};
use crate::index::format_iterative_query;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub temperature: f64,
    pub epochs: usize,
    /// Decoupled (AdamW-style) weight decay.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 64,
            negatives: 7,
            temperature: 0.01,
            epochs: 10,
            weight_decay: 0.01,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.temperature > 0.0 && self.temperature.is_finite();
        if !positive {
            return Err(Error::InvalidArgument("temperature must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        let non_negative = |x: f64| x >= 0.0 && x.is_finite();
        if !non_negative(self.learning_rate) || !non_negative(self.weight_decay) {
            return Err(Error::InvalidArgument(
                "learning_rate and weight_decay must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-example loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Embedded (frozen) vectors for a set of examples; each distinct text is
/// embedded once.
struct EmbeddedSet {
    vectors: Vec<Vec<f64>>,
    examples: Vec<(usize, usize, Vec<usize>)>,
}

fn embed_examples(examples: &[TrainingExample], embedder: &Embedder) -> Result<EmbeddedSet> {
    let mut queries: Vec<String> = Vec::new();
    let mut passages: Vec<String> = Vec::new();
    let mut query_ids: HashMap<String, usize> = HashMap::new();
    let mut passage_ids: HashMap<String, usize> = HashMap::new();
    let intern = |text: String, texts: &mut Vec<String>, ids: &mut HashMap<String, usize>| {
        *ids.entry(text.clone()).or_insert_with(|| {
            texts.push(text);
            texts.len() - 1
        })
    };
    let mut raw = Vec::with_capacity(examples.len());
    for ex in examples {
        let q = intern(
            format_iterative_query(&ex.question, &ex.partial_chain),
            &mut queries,
            &mut query_ids,
        );
        let p = intern(ex.positive.wire(), &mut passages, &mut passage_ids);
        let ns = ex
            .negatives
            .iter()
            .map(|n| intern(n.wire(), &mut passages, &mut passage_ids))
            .collect::<Vec<_>>();
        raw.push((q, p, ns));
    }
    let to_f64 = |vs: Vec<Vec<f32>>| -> Vec<Vec<f64>> {
        vs.into_iter()
            .map(|v| v.into_iter().map(f64::from).collect())
            .collect()
    };
    let mut vectors = to_f64(embedder.embed(&queries, EmbedRole::Query)?);
    let offset = vectors.len();
    vectors.extend(to_f64(embedder.embed(&passages, EmbedRole::Passage)?));
    let examples = raw
        .into_iter()
        .map(|(q, p, ns)| (q, p + offset, ns.into_iter().map(|n| n + offset).collect()))
        .collect();
    Ok(EmbeddedSet { vectors, examples })
}

const CHUNK: usize = 8;

/// Trains the projection with Adam on the contrastive objective. The
/// embedding backend stays frozen; only the projection changes.
///
/// Batches are reshuffled every epoch from `config.seed`. Gradient sums are
/// reduced in a fixed order so results are reproducible across thread
/// counts.
pub fn train_aligner(
    model: &AlignerModel,
    embedder: &Embedder,
    examples: &[TrainingExample],
    config: &TrainConfig,
) -> Result<(AlignerModel, TrainReport)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no training examples".into()));
    }
    let dim = model.dim();
    if embedder.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            actual: embedder.dim(),
        });
    }
    let set = embed_examples(examples, embedder)?;

    let mut projection = model.projection().to_vec();
    let mut m = vec![0.0; dim * dim];
    let mut v = vec![0.0; dim * dim];
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..set.examples.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let partials: Vec<Result<(f64, Vec<f64>)>> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grad = vec![0.0; dim * dim];
                    let mut loss = 0.0;
                    for &i in chunk {
                        let (q, p, ns) = &set.examples[i];
                        let negs: Vec<Vec<f64>> =
                            ns.iter().map(|&n| set.vectors[n].clone()).collect();
                        loss += projected_loss_into(
                            &projection,
                            dim,
                            &set.vectors[*q],
                            &set.vectors[*p],
                            &negs,
                            config.temperature,
                            &mut grad,
                        )?;
                    }
                    Ok((loss, grad))
                })
                .collect();
            let mut grad = vec![0.0; dim * dim];
            for partial in partials {
                let (loss, g) = partial?;
                epoch_loss += loss;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            step += 1;
            let bias1 = 1.0 - beta1.powi(step);
            let bias2 = 1.0 - beta2.powi(step);
            for k in 0..projection.len() {
                let g = grad[k] * scale;
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let update = (m[k] / bias1) / ((v[k] / bias2).sqrt() + eps);
                projection[k] -= config.learning_rate * (update + config.weight_decay * projection[k]);
            }
        }
        let mean = epoch_loss / set.examples.len() as f64;
        info!(epoch = epoch + 1, loss = mean, "aligner epoch");
        report.epoch_losses.push(mean);
    }
    report.steps = step as usize;

    let mut meta = model.meta().clone();
    meta.train_fingerprint = Some(config.fingerprint());
    let trained = AlignerModel::from_projection(dim, projection, meta)?;
    Ok((trained, report))
}

/// Fraction of examples whose positive outscores every negative.
pub fn top1_accuracy(model: &AlignerModel, embedder: &Embedder, examples: &[TrainingExample]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let set = embed_examples(examples, embedder)?;
    let dim = model.dim();
    let projected: Vec<Vec<f64>> = set
        .vectors
        .iter()
        .map(|x| project(model.projection(), dim, x).0)
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let hits = set
        .examples
        .iter()
        .filter(|(q, p, ns)| {
            let pos = dot(&projected[*q], &projected[*p]);
            ns.iter().all(|&n| dot(&projected[*q], &projected[n]) < pos)
        })
        .count();
    Ok(hits as f64 / examples.len() as f64)
}
