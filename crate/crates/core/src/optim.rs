//! Adaptive-moment optimizer, global gradient-norm clipping, and the
//! halving learning-rate schedule shared by all trainers.

use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
        }
    }

    pub fn for_params(params: &[&mut Tensor]) -> Self {
        let shapes: Vec<(usize, usize)> = params.iter().map(|p| (p.rows(), p.cols())).collect();
        Adam::new(&shapes)
    }

    /// One update. `params` and `grads` must be aligned with the shapes the
    /// optimizer was created with.
    pub fn step(&mut self, lr: f64, params: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - math::powf(self.beta1, t);
        let bc2 = 1.0 - math::powf(self.beta2, t);
        for i in 0..params.len() {
            let g = &grads[i];
            assert!(params[i].same_shape(g), "optimizer shape mismatch");
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..g.len() {
                let gj = g.data()[j];
                m.data_mut()[j] = self.beta1 * m.data()[j] + (1.0 - self.beta1) * gj;
                v.data_mut()[j] = self.beta2 * v.data()[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m.data()[j] / bc1;
                let vhat = v.data()[j] / bc2;
                params[i].data_mut()[j] -= lr * mhat / (math::sqrt(vhat) + self.eps);
            }
        }
    }
}

/// Scale all gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let total: f64 = grads.iter().map(|g| g.norm_sq()).sum();
    let norm = math::sqrt(total);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
    norm
}

/// Learning rate for a 1-based epoch index under the halve-every-k schedule.
pub fn scheduled_lr(initial: f64, epoch: usize, halve_every: usize) -> f64 {
    assert!(epoch >= 1 && halve_every >= 1);
    let halvings = (epoch - 1) / halve_every;
    initial * math::powf(0.5, halvings as f64)
}
