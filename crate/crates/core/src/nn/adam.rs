use serde::{Deserialize, Serialize};

use super::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamSlot {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One bias-corrected Adam update at timestep `t` (1-based).
pub fn adam_step(params: &mut [f64], grads: &[f64], slot: &mut AdamSlot, t: u64, hp: &AdamHyper) {
    if slot.m.len() != params.len() {
        slot.m = vec![0.0; params.len()];
        slot.v = vec![0.0; params.len()];
    }
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        slot.m[i] = hp.beta1 * slot.m[i] + (1.0 - hp.beta1) * g;
        slot.v[i] = hp.beta2 * slot.v[i] + (1.0 - hp.beta2) * g * g;
        let mh = slot.m[i] / c1;
        let vh = slot.v[i] / c2;
        params[i] -= hp.lr * mh / (vh.sqrt() + hp.eps);
    }
}

/// Adam over a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub hyper: AdamHyper,
    pub t: u64,
    slots: Vec<AdamSlot>,
}

impl Adam {
    pub fn new(hyper: AdamHyper) -> Self {
        Self { hyper, t: 0, slots: Vec::new() }
    }

    /// Applies the accumulated gradients; callers zero them afterwards.
    pub fn step(&mut self, params: Vec<&mut Param>) {
        self.t += 1;
        if self.slots.len() != params.len() {
            self.slots = vec![AdamSlot::default(); params.len()];
        }
        for (p, slot) in params.into_iter().zip(&mut self.slots) {
            adam_step(&mut p.value, &p.grad, slot, self.t, &self.hyper);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_lr() {
        let mut p = vec![1.0, 1.0, 1.0];
        let g = [0.3, -7.0, 0.0];
        let mut slot = AdamSlot::default();
        let hp = AdamHyper::new(1e-3);
        adam_step(&mut p, &g, &mut slot, 1, &hp);
        // m̂ = g, v̂ = g², so the move is lr·g/(|g| + eps)
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-10);
        assert!((p[1] - (1.0 + 1e-3)).abs() < 1e-10);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn timestep_counts() {
        let mut a = Adam::new(AdamHyper::new(0.1));
        let mut p = Param::zeros(&[2]);
        a.step(vec![&mut p]);
        a.step(vec![&mut p]);
        assert_eq!(a.t, 2);
        assert_eq!(p.value, vec![0.0, 0.0]);
    }
}
