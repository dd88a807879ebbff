//! Classification, consistency and adversarial-perturbation primitives.
//!
//! Each loss exists twice: a plain numeric form over probability slices, and
//! a tape form used during training. Tests pin the two against each other.

use crate::nn::{Graph, Matrix, NodeId};

use super::DetectorError;

/// Probabilities are clamped into this range before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-sum_i y_i ln(clamp(yhat_i))`.
pub fn cross_entropy_loss(pred: &[f64], label: &[f64]) -> f64 {
    assert_eq!(pred.len(), label.len(), "distribution length mismatch");
    -pred
        .iter()
        .zip(label)
        .map(|(&p, &y)| y * p.clamp(PROB_FLOOR, 1.0).ln())
        .sum::<f64>()
}

/// `KL(p || q)` with clamped logs.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distribution length mismatch");
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let (la, lb) = (a.clamp(PROB_FLOOR, 1.0).ln(), b.clamp(PROB_FLOOR, 1.0).ln());
            a * (la - lb)
        })
        .sum()
}

/// Symmetric consistency loss `(KL(p||q) + KL(q||p)) / 2`.
pub fn kl_consistency_loss(p: &[f64], q: &[f64]) -> f64 {
    0.5 * (kl_divergence(p, q) + kl_divergence(q, p))
}

pub fn total_loss(ce: f64, kl: f64, beta: f64) -> f64 {
    ce + beta * kl
}

/// Fast-gradient-method perturbation `epsilon * g / ||g||_2`.
pub fn fgm_perturb(gradient: &[f64], epsilon: f64) -> Result<Vec<f64>, DetectorError> {
    let norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(DetectorError::ZeroGradient);
    }
    Ok(gradient.iter().map(|g| epsilon * g / norm).collect())
}

/// Tape form of [`cross_entropy_loss`] for a `1 x classes` probability node.
pub(crate) fn graph_cross_entropy(g: &mut Graph, probs: NodeId, label: usize) -> NodeId {
    let classes = g.value(probs).cols;
    let mut onehot = Matrix::zeros(1, classes);
    onehot.data[label] = 1.0;
    let logp = g.log_clamp(probs, PROB_FLOOR, 1.0);
    let picked = g.mul_const(logp, onehot);
    let s = g.sum(picked);
    g.scale(s, -1.0)
}

/// Tape form of [`kl_consistency_loss`]:
/// `0.5 * sum (p - q) (ln p - ln q)`.
pub(crate) fn graph_kl_consistency(g: &mut Graph, p: NodeId, q: NodeId) -> NodeId {
    let lp = g.log_clamp(p, PROB_FLOOR, 1.0);
    let lq = g.log_clamp(q, PROB_FLOOR, 1.0);
    let dp = g.sub(p, q);
    let dl = g.sub(lp, lq);
    let prod = g.mul(dp, dl);
    let s = g.sum(prod);
    g.scale(s, 0.5)
}
