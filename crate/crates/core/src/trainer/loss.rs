use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-12;

/// Mean binary cross-entropy over labels and its gradient with respect to
/// the (unclamped) probabilities. Inside the clamp the gradient is exact;
/// outside it is zero.
pub fn bce_loss(probs: &Vector<f64>, targets: &[f64]) -> Result<(f64, Vector<f64>)> {
    if probs.len() != targets.len() {
        return Err(Error::shape("bce_loss", probs.len(), targets.len()));
    }
    let n = probs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vector::zeros(probs.len());
    for (k, (&p, &y)) in probs.iter().zip(targets).enumerate() {
        let q = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        if q == p {
            grad[k] = (-y / q + (1.0 - y) / (1.0 - q)) / n;
        }
    }
    Ok((loss / n, grad))
}
