//! Temperature-scaled contrastive loss over one positive and a set of
//! negatives, with analytic gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub d_query: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} contains non-finite values")))
    }
}

/// `-log(exp(s+/τ) / (exp(s+/τ) + Σ exp(s-/τ)))` with `s = q·t`.
///
/// Evaluated as a log-sum-exp around the largest logit; when the positive
/// logit is the largest the `ln_1p` form keeps precision for tiny losses.
pub fn contrastive_loss(
    query: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
    temperature: f64,
) -> Result<LossGrad> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    check_finite("query", query)?;
    check_finite("positive", positive)?;
    for n in negatives {
        check_finite("negative", n)?;
    }
    let dim = query.len();
    if positive.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            actual: positive.len(),
        });
    }
    if let Some(n) = negatives.iter().find(|n| n.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: n.len(),
        });
    }

    let logits: Vec<f64> = std::iter::once(positive)
        .chain(negatives.iter().map(Vec::as_slice))
        .map(|t| dot(query, t) / temperature)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = if logits[0] >= max {
        exps[1..].iter().sum::<f64>().ln_1p()
    } else {
        (max - logits[0]) + total.ln()
    };

    // dL/dz_k = softmax_k - [k == 0]
    let weights: Vec<f64> = exps
        .iter()
        .enumerate()
        .map(|(k, e)| e / total - if k == 0 { 1.0 } else { 0.0 })
        .collect();
    let mut d_query = vec![0.0; dim];
    for (w, t) in weights
        .iter()
        .zip(std::iter::once(positive).chain(negatives.iter().map(Vec::as_slice)))
    {
        for (d, x) in d_query.iter_mut().zip(t) {
            *d += w * x / temperature;
        }
    }
    let scale = |w: f64| -> Vec<f64> { query.iter().map(|x| w * x / temperature).collect() };
    Ok(LossGrad {
        loss,
        d_query,
        d_positive: scale(weights[0]),
        d_negatives: weights[1..].iter().map(|&w| scale(w)).collect(),
    })
}

/// `normalize(P x)` plus the pre-normalization norm.
pub(crate) fn project(projection: &[f64], dim: usize, x: &[f64]) -> (Vec<f64>, f64) {
    let mut u = vec![0.0; dim];
    for (r, out) in u.iter_mut().enumerate() {
        *out = dot(&projection[r * dim..(r + 1) * dim], x);
    }
    let norm = dot(&u, &u).sqrt();
    if norm > 0.0 {
        for v in &mut u {
            *v /= norm;
        }
    }
    (u, norm)
}

/// Accumulates `dL/dP` for `f = normalize(P x)` given `dL/df`.
fn backprop(grad: &mut [f64], dim: usize, f: &[f64], norm: f64, d_f: &[f64], x: &[f64]) {
    if norm == 0.0 {
        return;
    }
    let along = dot(f, d_f);
    for r in 0..dim {
        let d_u = (d_f[r] - f[r] * along) / norm;
        if d_u == 0.0 {
            continue;
        }
        let row = &mut grad[r * dim..(r + 1) * dim];
        for (g, xc) in row.iter_mut().zip(x) {
            *g += d_u * xc;
        }
    }
}

/// Loss for one training example where every raw embedding passes through
/// the projection and re-normalization, and the gradient with respect to
/// the row-major `dim x dim` projection.
pub fn projected_loss(
    projection: &[f64],
    dim: usize,
    query: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
    temperature: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; dim * dim];
    let loss = projected_loss_into(projection, dim, query, positive, negatives, temperature, &mut grad)?;
    Ok((loss, grad))
}

pub(crate) fn projected_loss_into(
    projection: &[f64],
    dim: usize,
    query: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
    temperature: f64,
    grad: &mut [f64],
) -> Result<f64> {
    if projection.len() != dim * dim {
        return Err(Error::Dimension {
            expected: dim * dim,
            actual: projection.len(),
        });
    }
    for v in std::iter::once(query)
        .chain(std::iter::once(positive))
        .chain(negatives.iter().map(Vec::as_slice))
    {
        if v.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: v.len(),
            });
        }
    }
    let (fq, nq) = project(projection, dim, query);
    let (fp, np) = project(projection, dim, positive);
    let projected_negs: Vec<(Vec<f64>, f64)> =
        negatives.iter().map(|n| project(projection, dim, n)).collect();
    let neg_vecs: Vec<Vec<f64>> = projected_negs.iter().map(|(f, _)| f.clone()).collect();
    let lg = contrastive_loss(&fq, &fp, &neg_vecs, temperature)?;
    backprop(grad, dim, &fq, nq, &lg.d_query, query);
    backprop(grad, dim, &fp, np, &lg.d_positive, positive);
    for ((f, n), (d, x)) in projected_negs
        .iter()
        .zip(lg.d_negatives.iter().zip(negatives))
    {
        backprop(grad, dim, f, *n, d, x);
    }
    Ok(lg.loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = dot(v, v).sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn uniform_scores_give_ln_eight() {
        let q = vec![1.0, 0.0];
        let orth = vec![0.0, 1.0];
        let negs = vec![orth.clone(); 7];
        let lg = contrastive_loss(&q, &orth, &negs, 1.0).unwrap();
        assert!((lg.loss - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_negative_pins() {
        let q = vec![1.0, 0.0];
        let lg = contrastive_loss(&q, &q, &[vec![0.0, 1.0]], 1.0).unwrap();
        // ln(1 + e^-1) = 0.313261687518...
        assert!((lg.loss - 0.313_261_687_518_222_8).abs() < 1e-12);
        let lg = contrastive_loss(&q, &q, &[vec![0.0, 1.0]], 0.01).unwrap();
        assert!(lg.loss >= 0.0 && lg.loss <= 1e-40, "{}", lg.loss);
    }

    #[test]
    fn rejects_non_finite_and_bad_temperature() {
        let q = vec![1.0, 0.0];
        assert!(contrastive_loss(&q, &[f64::NAN, 0.0], &[], 1.0).is_err());
        assert!(contrastive_loss(&q, &q, &[], 0.0).is_err());
        assert!(contrastive_loss(&q, &q, &[], -1.0).is_err());
    }

    #[test]
    fn monotone_in_positive_score() {
        let q = vec![1.0, 0.0];
        let negs = vec![unit(&[0.3, 1.0]), unit(&[-0.2, 1.0])];
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let angle = std::f64::consts::PI * (1.0 - f64::from(i) / 20.0);
            let p = vec![angle.cos(), angle.sin()];
            let l = contrastive_loss(&q, &p, &negs, 0.5).unwrap().loss;
            assert!(l > 0.0);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let q = unit(&[0.3, -0.5, 0.8]);
        let p = unit(&[0.1, 0.4, 0.2]);
        let negs = vec![unit(&[-0.7, 0.1, 0.3]), unit(&[0.5, 0.5, -0.1])];
        let tau = 0.3;
        let lg = contrastive_loss(&q, &p, &negs, tau).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut plus = q.clone();
            let mut minus = q.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (contrastive_loss(&plus, &p, &negs, tau).unwrap().loss
                - contrastive_loss(&minus, &p, &negs, tau).unwrap().loss)
                / (2.0 * h);
            assert!((fd - lg.d_query[i]).abs() < 1e-6);
        }
    }
}
