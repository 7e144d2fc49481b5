use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{BackendResult, EmbedBackend};

/// Deterministic bag-of-tokens embedding.
///
/// Text is lowercased and split on every non-alphanumeric character. Each
/// token maps to a seeded pseudo-random unit vector; the token vectors are
/// averaged and L2-normalized. Text without tokens maps to the first basis
/// vector.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Vec<f32> {
    assert!(dim >= 2, "hash embedding needs dim >= 2");
    let lowered = text.to_lowercase();
    let mut acc = vec![0.0f64; dim];
    let mut tokens = 0usize;
    for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let v = token_vector(token, dim, seed);
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += x;
        }
        tokens += 1;
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if tokens == 0 || norm < 1e-12 {
        let mut basis = vec![0.0f32; dim];
        basis[0] = 1.0;
        return basis;
    }
    acc.iter().map(|x| (x / norm) as f32).collect()
}

fn token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(token.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 2, "hash embedding needs dim >= 2");
        Self { dim, seed }
    }
}

impl EmbedBackend for HashEmbedder {
    fn embed_batch(&self, texts: &[String]) -> BackendResult<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| hash_embed(t, self.dim, self.seed)).collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn describe(&self) -> String {
        format!("hash(dim={},seed={})", self.dim, self.seed)
    }
}
