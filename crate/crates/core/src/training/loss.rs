use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::GraphInstance;
use crate::model::{backward, forward_with_cache, EcnConfig, EcnParams, PairScores};

/// Probability clamp applied before taking logs.
pub const PROBABILITY_EPSILON: f64 = 1e-7;

fn gold_matrix(n: usize, gold: &[(usize, usize)]) -> Array2<bool> {
    let mut y = Array2::from_elem((n, n), false);
    for &(h, t) in gold {
        if h < n && t < n && h != t {
            y[[h, t]] = true;
        }
    }
    y
}

/// Mean binary cross-entropy over all ordered pairs, positives weighted by
/// `pos_weight`. Zero when there are no pairs.
pub fn bce_loss(scores: &PairScores, gold: &[(usize, usize)], pos_weight: f64) -> f64 {
    let n = scores.node_count();
    if scores.is_empty() {
        return 0.0;
    }
    let y = gold_matrix(n, gold);
    let total: f64 = scores
        .iter()
        .map(|(i, j, p)| {
            let p = p.clamp(PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON);
            if y[[i, j]] {
                -pos_weight * p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / scores.len() as f64
}

/// Loss and its gradient with respect to the pair logits. The gradient is
/// that of the unclamped loss, `(w·y·(p−1) + (1−y)·p) / N`, so saturated
/// wrong pairs still receive a signal.
pub fn loss_and_logit_grad(
    scores: &PairScores,
    gold: &[(usize, usize)],
    pos_weight: f64,
) -> (f64, Array2<f64>) {
    let n = scores.node_count();
    let mut grad = Array2::<f64>::zeros((n, n));
    if scores.is_empty() {
        return (0.0, grad);
    }
    let y = gold_matrix(n, gold);
    let scale = 1.0 / scores.len() as f64;
    for (i, j, p) in scores.iter() {
        grad[[i, j]] = if y[[i, j]] {
            pos_weight * (p - 1.0) * scale
        } else {
            p * scale
        };
    }
    (bce_loss(scores, gold, pos_weight), grad)
}

/// Loss and exact parameter gradients for one instance.
pub fn gradients(
    input: &GraphInstance,
    params: &EcnParams,
    config: &EcnConfig,
    pos_weight: f64,
) -> Result<(f64, EcnParams)> {
    let cache = forward_with_cache(input, params, config)?;
    let (loss, dlogits) = loss_and_logit_grad(&cache.scores, &input.gold, pos_weight);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss of {}", input.doc_id)));
    }
    let grads = backward(input, params, &cache, &dlogits)?;
    Ok((loss, grads))
}
