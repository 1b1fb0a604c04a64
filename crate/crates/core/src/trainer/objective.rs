//! Primary per-sample losses with gradients with respect to the logits.

use serde::{Deserialize, Serialize};

/// Lower clamp for probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryLoss {
    CrossEntropy,
    Focal,
}

/// `-ln p_y` and `p - onehot(y)`.
pub fn ce_loss_and_grad(probs: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = -probs[label].max(LOG_FLOOR).ln();
    let mut grad = probs.to_vec();
    grad[label] -= 1.0;
    (loss, grad)
}

/// `-(1 - p_y)^γ ln p_y`. With `γ = 0` this is exactly cross-entropy.
pub fn fl_loss_and_grad(probs: &[f64], label: usize, gamma: f64) -> (f64, Vec<f64>) {
    if gamma == 0.0 {
        return ce_loss_and_grad(probs, label);
    }
    let p = probs[label];
    let log_p = p.max(LOG_FLOOR).ln();
    let q = 1.0 - p;
    let loss = -q.powf(gamma) * log_p;
    // dL/dp_y; both terms vanish as p_y -> 1
    let d_p = if q <= 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * log_p - q.powf(gamma) / p.max(LOG_FLOOR)
    };
    // dp_y/dz_i = p_y (δ_iy - p_i)
    let grad = probs
        .iter()
        .enumerate()
        .map(|(i, &pi)| d_p * p * (if i == label { 1.0 } else { 0.0 } - pi))
        .collect();
    (loss, grad)
}

pub fn primary_loss_and_grad(kind: PrimaryLoss, gamma: f64, probs: &[f64], label: usize) -> (f64, Vec<f64>) {
    match kind {
        PrimaryLoss::CrossEntropy => ce_loss_and_grad(probs, label),
        PrimaryLoss::Focal => fl_loss_and_grad(probs, label, gamma),
    }
}
