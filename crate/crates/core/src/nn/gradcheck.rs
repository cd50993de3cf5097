//! Central-difference verification of backward passes.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{bce, bce_grad, cross_entropy, cross_entropy_grad, softmax, softmax_backward};
use super::{Sequential, Tensor4};
use crate::error::{arg_err, Result};

/// Gradients below this magnitude are compared on an absolute scale; the
/// finite-difference roundoff at `h = 1e-5` is around `1e-10`.
pub const GRAD_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Scalar loss on a network output, with its gradient.
#[derive(Debug, Clone)]
pub enum Objective {
    /// `Σ r ⊙ y` for fixed coefficients `r`, probing a single layer.
    Weighted(Tensor4),
    /// Mean cross-entropy of softmax over the output channels.
    SoftmaxCrossEntropy(Vec<usize>),
    /// Mean binary cross-entropy of scores in (0, 1).
    Bce(Vec<f64>),
}

impl Objective {
    pub fn evaluate(&self, y: &Tensor4) -> Result<(f64, Tensor4)> {
        match self {
            Objective::Weighted(r) => {
                if r.dims() != y.dims() {
                    return arg_err("weight tensor does not match the output");
                }
                let loss = r.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
                Ok((loss, r.clone()))
            }
            Objective::SoftmaxCrossEntropy(labels) => {
                if labels.len() != y.n() {
                    return arg_err("one label per batch item required");
                }
                let n = y.n() as f64;
                let mut loss = 0.0;
                let mut grad = Vec::with_capacity(y.len());
                for (i, &l) in labels.iter().enumerate() {
                    let p = softmax(y.item(i));
                    if l >= p.len() {
                        return arg_err(format!("label {l} out of range"));
                    }
                    loss += cross_entropy(&p, l) / n;
                    let gp: Vec<f64> = cross_entropy_grad(&p, l).iter().map(|g| g / n).collect();
                    grad.extend(softmax_backward(&p, &gp));
                }
                Ok((loss, Tensor4::from_parts(y.dims(), grad)))
            }
            Objective::Bce(targets) => {
                if targets.len() != y.len() {
                    return arg_err("one target per score required");
                }
                let n = y.len() as f64;
                let loss = y.as_slice().iter().zip(targets).map(|(&s, &t)| bce(s, t)).sum::<f64>() / n;
                let grad = y.as_slice().iter().zip(targets).map(|(&s, &t)| bce_grad(s, t) / n).collect();
                Ok((loss, Tensor4::from_parts(y.dims(), grad)))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// Perturbations that moved an activation across a kink.
    pub skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub entries: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tolerance: f64,
    /// Check at most this many entries per tensor (seeded sample); `None`
    /// checks every entry.
    pub max_per_tensor: Option<usize>,
    pub check_input: bool,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { h: 1e-5, tolerance: 1e-5, max_per_tensor: None, check_input: true, seed: 0 }
    }
}

fn loss_and_pattern(net: &mut Sequential, x: &Tensor4, obj: &Objective) -> Result<(f64, Vec<bool>)> {
    let y = net.forward(x)?;
    Ok((obj.evaluate(&y)?.0, net.kink_pattern()))
}

fn indices(len: usize, limit: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match limit {
        Some(k) if k < len => {
            let mut v = sample(rng, len, k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Compares backpropagated gradients of every parameter (and optionally of
/// the input) with central differences of the objective.
pub fn grad_check(net: &mut Sequential, x: &Tensor4, obj: &Objective, opts: &GradCheckOptions) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let h = opts.h;
    net.zero_grad();
    let y = net.forward(x)?;
    let base = net.kink_pattern();
    let (_, g) = obj.evaluate(&y)?;
    let dx = net.backward(&g)?;
    let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();
    let names = net.param_names();

    let mut entries = Vec::new();
    for (pi, grads) in analytic.iter().enumerate() {
        let mut entry = ParamCheck { name: names[pi].clone(), checked: 0, skipped: 0, max_rel_error: 0.0 };
        for idx in indices(grads.len(), opts.max_per_tensor, &mut rng) {
            let orig = net.params()[pi].value[idx];
            net.params_mut()[pi].value[idx] = orig + h;
            let (up, pu) = loss_and_pattern(net, x, obj)?;
            net.params_mut()[pi].value[idx] = orig - h;
            let (down, pd) = loss_and_pattern(net, x, obj)?;
            net.params_mut()[pi].value[idx] = orig;
            if pu != base || pd != base {
                entry.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            entry.checked += 1;
            entry.max_rel_error = entry.max_rel_error.max(relative_error(grads[idx], numeric));
        }
        entries.push(entry);
    }

    if opts.check_input {
        let mut entry = ParamCheck { name: "input".into(), checked: 0, skipped: 0, max_rel_error: 0.0 };
        let mut xp = x.clone();
        for idx in indices(x.len(), opts.max_per_tensor, &mut rng) {
            let orig = x.as_slice()[idx];
            xp.as_mut_slice()[idx] = orig + h;
            let (up, pu) = loss_and_pattern(net, &xp, obj)?;
            xp.as_mut_slice()[idx] = orig - h;
            let (down, pd) = loss_and_pattern(net, &xp, obj)?;
            xp.as_mut_slice()[idx] = orig;
            if pu != base || pd != base {
                entry.skipped += 1;
                continue;
            }
            entry.checked += 1;
            entry.max_rel_error = entry.max_rel_error.max(relative_error(dx.as_slice()[idx], (up - down) / (2.0 * h)));
        }
        entries.push(entry);
    }
    // leave the caches in the unperturbed state
    net.forward(x)?;

    let max_rel_error = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
    Ok(GradReport { passed: max_rel_error < opts.tolerance, max_rel_error, tolerance: opts.tolerance, entries })
}
