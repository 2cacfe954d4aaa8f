//! Central finite-difference verification of analytic gradients. Used by the
//! unit tests and the acceptance suite.

use alloc::vec::Vec;

use crate::math;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Numeric gradient of `loss` with respect to each parameter tensor, by
/// central differences.
pub fn finite_difference(
    params: &[Tensor],
    eps: f64,
    mut loss: impl FnMut(&[Tensor]) -> f64,
) -> Vec<Tensor> {
    let mut grads = Vec::with_capacity(params.len());
    let mut work: Vec<Tensor> = params.to_vec();
    for p in 0..params.len() {
        let mut g = Tensor::zeros(params[p].rows(), params[p].cols());
        for i in 0..params[p].len() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let up = loss(&work);
            work[p].data_mut()[i] = orig - eps;
            let down = loss(&work);
            work[p].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * eps);
        }
        grads.push(g);
    }
    grads
}

/// Worst relative error between analytic and numeric gradients. The
/// denominator is floored to avoid blowing up on near-zero entries.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric.iter()) {
        assert!(a.same_shape(n));
        for (&av, &nv) in a.data().iter().zip(n.data().iter()) {
            let denom = math::abs(av).max(math::abs(nv)).max(floor);
            let rel = math::abs(av - nv) / denom;
            worst = worst.max(rel);
        }
    }
    worst
}

/// Build the loss graph with `build`, compare tape gradients of every
/// parameter against central differences, and return the worst relative
/// error. `build` receives leaf vars in the same order as `params`.
pub fn check(
    params: &[Tensor],
    eps: f64,
    mut build: impl FnMut(&mut Tape, &[Var]) -> Var,
) -> f64 {
    let mut tape = Tape::new();
    let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(p)).collect();
    let loss = build(&mut tape, &leaves);
    let grads = tape.backward(loss);
    let analytic: Vec<Tensor> = leaves.iter().map(|&v| grads.of(v)).collect();

    let numeric = finite_difference(params, eps, |ps| {
        let mut t = Tape::new();
        let ls: Vec<Var> = ps.iter().map(|p| t.leaf(p)).collect();
        let l = build(&mut t, &ls);
        t.scalar(l)
    });

    max_relative_error(&analytic, &numeric, 1e-4)
}
