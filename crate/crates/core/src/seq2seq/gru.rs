//! Gated recurrent unit cell. Row-vector convention: inputs are 1 x in,
//! hidden states 1 x hid, weights in x hid / hid x hid.
//!
//! Update rule:
//!   z_t = sigmoid(x W_z + h U_z + b_z)
//!   r_t = sigmoid(x W_r + h U_r + b_r)
//!   h_t = (1 - z_t) * h_prev + z_t * tanh(x W_h + (r_t * h_prev) U_h + b_h)

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
}

impl GruCell {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GruCell {
            w_z: Tensor::zeros(input_dim, hidden_dim),
            u_z: Tensor::zeros(hidden_dim, hidden_dim),
            b_z: Tensor::zeros(1, hidden_dim),
            w_r: Tensor::zeros(input_dim, hidden_dim),
            u_r: Tensor::zeros(hidden_dim, hidden_dim),
            b_r: Tensor::zeros(1, hidden_dim),
            w_h: Tensor::zeros(input_dim, hidden_dim),
            u_h: Tensor::zeros(hidden_dim, hidden_dim),
            b_h: Tensor::zeros(1, hidden_dim),
        }
    }

    /// Uniform [-scale, scale] initialization for all parameters.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let u = |r: usize, c: usize, rng: &mut R| Tensor::uniform(r, c, -scale, scale, rng);
        GruCell {
            w_z: u(input_dim, hidden_dim, rng),
            u_z: u(hidden_dim, hidden_dim, rng),
            b_z: u(1, hidden_dim, rng),
            w_r: u(input_dim, hidden_dim, rng),
            u_r: u(hidden_dim, hidden_dim, rng),
            b_r: u(1, hidden_dim, rng),
            w_h: u(input_dim, hidden_dim, rng),
            u_h: u(hidden_dim, hidden_dim, rng),
            b_h: u(1, hidden_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.cols()
    }

    /// One recurrence step. Panics on dimension mismatch.
    pub fn step(&self, x: &Tensor, h_prev: &Tensor) -> Tensor {
        assert_eq!(x.cols(), self.input_dim(), "gru input dimension mismatch");
        assert_eq!(
            h_prev.cols(),
            self.hidden_dim(),
            "gru hidden dimension mismatch"
        );
        assert_eq!(x.rows(), h_prev.rows());
        let z = x
            .matmul(&self.w_z)
            .add(&h_prev.matmul(&self.u_z))
            .add_row(&self.b_z)
            .sigmoid();
        let r = x
            .matmul(&self.w_r)
            .add(&h_prev.matmul(&self.u_r))
            .add_row(&self.b_r)
            .sigmoid();
        let candidate = x
            .matmul(&self.w_h)
            .add(&r.mul_elem(h_prev).matmul(&self.u_h))
            .add_row(&self.b_h)
            .tanh();
        let ones = Tensor::filled(z.rows(), z.cols(), 1.0);
        ones.sub(&z).mul_elem(h_prev).add(&z.mul_elem(&candidate))
    }

    pub fn leaves(&self, tape: &mut Tape) -> GruVars {
        GruVars {
            w_z: tape.leaf(&self.w_z),
            u_z: tape.leaf(&self.u_z),
            b_z: tape.leaf(&self.b_z),
            w_r: tape.leaf(&self.w_r),
            u_r: tape.leaf(&self.u_r),
            b_r: tape.leaf(&self.b_r),
            w_h: tape.leaf(&self.w_h),
            u_h: tape.leaf(&self.u_h),
            b_h: tape.leaf(&self.b_h),
        }
    }

    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_z", &self.b_z),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_r", &self.b_r),
            ("w_h", &self.w_h),
            ("u_h", &self.u_h),
            ("b_h", &self.b_h),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("w_z", &mut self.w_z),
            ("u_z", &mut self.u_z),
            ("b_z", &mut self.b_z),
            ("w_r", &mut self.w_r),
            ("u_r", &mut self.u_r),
            ("b_r", &mut self.b_r),
            ("w_h", &mut self.w_h),
            ("u_h", &mut self.u_h),
            ("b_h", &mut self.b_h),
        ]
    }
}

/// Tape handles for a [`GruCell`]'s parameters.
#[derive(Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

impl GruVars {
    /// Taped recurrence step, identical arithmetic to [`GruCell::step`].
    pub fn step(&self, tape: &mut Tape, x: Var, h_prev: Var) -> Var {
        let xz = tape.matmul(x, self.w_z);
        let hz = tape.matmul(h_prev, self.u_z);
        let sz = tape.add(xz, hz);
        let sz = tape.add_row(sz, self.b_z);
        let z = tape.sigmoid(sz);

        let xr = tape.matmul(x, self.w_r);
        let hr = tape.matmul(h_prev, self.u_r);
        let sr = tape.add(xr, hr);
        let sr = tape.add_row(sr, self.b_r);
        let r = tape.sigmoid(sr);

        let rh = tape.mul(r, h_prev);
        let xh = tape.matmul(x, self.w_h);
        let hh = tape.matmul(rh, self.u_h);
        let sh = tape.add(xh, hh);
        let sh = tape.add_row(sh, self.b_h);
        let candidate = tape.tanh(sh);

        let neg_z = tape.scale(z, -1.0);
        let one_minus_z = tape.add_scalar(neg_z, 1.0);
        let keep = tape.mul(one_minus_z, h_prev);
        let update = tape.mul(z, candidate);
        tape.add(keep, update)
    }

    pub fn all(&self) -> [Var; 9] {
        [
            self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h,
            self.b_h,
        ]
    }
}
