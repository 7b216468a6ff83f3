use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Affine map `y = W x + b`; parameters stored as `W` (row-major,
/// `out × in`) followed by `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub params: Vec<f64>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let limit = libm::sqrt(6.0 / (in_dim + out_dim) as f64);
        let mut params = alloc::vec![0.0; (in_dim + 1) * out_dim];
        for w in &mut params[..in_dim * out_dim] {
            *w = rng.gen_range(-limit..limit);
        }
        Linear { in_dim, out_dim, params }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear { in_dim, out_dim, params: alloc::vec![0.0; (in_dim + 1) * out_dim] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let bias = &self.params[self.in_dim * self.out_dim..];
        (0..self.out_dim)
            .map(|o| {
                let row = &self.params[o * self.in_dim..(o + 1) * self.in_dim];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias[o]
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and input gradients into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut [f64], dx: &mut [f64]) {
        let wlen = self.in_dim * self.out_dim;
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.params[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
            grad[wlen + o] += g;
        }
    }
}
