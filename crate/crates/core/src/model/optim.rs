//! Adam with per-group learning rates, global-norm gradient clipping and the
//! per-epoch multiplicative learning-rate schedule.

use alloc::vec::Vec;

use super::math::l2_norm_sq;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam state for one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam over a fixed list of parameter groups. A fresh instance has zero
/// moments, so transfer stages start from a reset optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    hp: AdamParams,
    t: u64,
    groups: Vec<AdamState>,
}

impl Adam {
    pub fn new(group_sizes: &[usize], hp: AdamParams) -> Self {
        let groups = group_sizes
            .iter()
            .map(|&n| AdamState { m: alloc::vec![0.0; n], v: alloc::vec![0.0; n] })
            .collect();
        Adam { hp, t: 0, groups }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. `groups[i]` is `(params, grads, lr)`.
    pub fn step(&mut self, groups: &mut [(&mut [f64], &[f64], f64)]) {
        assert_eq!(groups.len(), self.groups.len(), "parameter group count changed");
        self.t += 1;
        let AdamParams { beta1, beta2, eps } = self.hp;
        let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
        for ((params, grads, lr), state) in groups.iter_mut().zip(&mut self.groups) {
            for i in 0..params.len() {
                let g = grads[i];
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
                let m_hat = state.m[i] / bc1;
                let v_hat = state.v[i] / bc2;
                params[i] -= *lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipStats {
    pub pre_norm: f64,
    pub post_norm: f64,
}

/// Rescales all gradients in place so that their joint L2 norm is at most
/// `max_norm`.
pub fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: f64) -> ClipStats {
    let pre_norm = libm::sqrt(grads.iter().map(|g| l2_norm_sq(g)).sum::<f64>());
    if pre_norm > max_norm {
        let scale = max_norm / (pre_norm + 1e-6);
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    let post_norm = libm::sqrt(grads.iter().map(|g| l2_norm_sq(g)).sum::<f64>());
    ClipStats { pre_norm, post_norm }
}

/// `lr(k) = base · factor^k` for 0-indexed epoch `k`; the power is the
/// product of `k` factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiplicativeSchedule {
    pub base: f64,
    pub factor: f64,
}

impl MultiplicativeSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mut pow = 1.0;
        for _ in 0..epoch {
            pow *= self.factor;
        }
        self.base * pow
    }
}
