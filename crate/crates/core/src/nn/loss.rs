//! Softmax, cross-entropy and binary cross-entropy with their gradients.

/// Probabilities are clamped to `[PROB_FLOOR, 1]` inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Vector-Jacobian product of softmax: `p ⊙ (g - <g, p>)`.
pub fn softmax_backward(probs: &[f64], grad: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(grad).map(|(p, g)| p * g).sum();
    probs.iter().zip(grad).map(|(p, g)| p * (g - dot)).collect()
}

pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].clamp(PROB_FLOOR, 1.0).ln()
}

/// Gradient of [`cross_entropy`] with respect to the probabilities; zero
/// where the clamp is active.
pub fn cross_entropy_grad(probs: &[f64], label: usize) -> Vec<f64> {
    let mut g = vec![0.0; probs.len()];
    let p = probs[label];
    if p > PROB_FLOOR {
        g[label] = -1.0 / p.min(1.0);
    }
    g
}

pub fn bce(score: f64, target: f64) -> f64 {
    let s = score.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -(target * s.ln() + (1.0 - target) * (1.0 - s).ln())
}

/// Derivative of [`bce`] with respect to the score.
pub fn bce_grad(score: f64, target: f64) -> f64 {
    if score <= PROB_FLOOR || score >= 1.0 - PROB_FLOOR {
        return 0.0;
    }
    (score - target) / (score * (1.0 - score))
}
