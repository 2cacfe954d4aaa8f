//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records operations eagerly (values are computed as the graph is
//! built) and [`Tape::backward`] walks the record in reverse, accumulating
//! gradients. Every trainer in this crate builds one tape per optimization
//! step; inference paths use plain tensor math and are tested for bit
//! equality against the taped forward pass.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// Add a 1 x n row vector to every row of an m x n tensor.
    AddRow(Var, Var),
    /// Subtract a 1 x n row vector from every row.
    SubRow(Var, Var),
    /// Multiply every row elementwise by a 1 x n row vector.
    MulRow(Var, Var),
    /// Divide every row elementwise by a 1 x n row vector.
    DivRow(Var, Var),
    /// Column means: m x n -> 1 x n.
    MeanRows(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    /// Elementwise sqrt(x + shift).
    SqrtShift(Var),
    /// Elementwise ln(max(x, floor)).
    LnClamped(Var, f64),
    Transpose(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    /// Stack inputs vertically in order.
    StackRows(Vec<Var>),
    /// Extract row r as a 1 x n tensor.
    Row(Var, usize),
    /// Row-wise softmax.
    Softmax(Var),
    /// Row-wise log-softmax.
    LogSoftmax(Var),
    /// Gather rows of a table by index (embedding lookup).
    Gather(Var, Vec<usize>),
    SumAll(Var),
    MeanAll(Var),
    /// Negative sum of picked entries: -sum_i a[i, targets[i]], a 1 x 1 scalar.
    NllPicked(Var, Vec<usize>),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients for every tape node, indexed by [`Var`]. Nodes the loss does not
/// depend on have no entry.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.id].as_ref()
    }

    /// Gradient of a leaf, zero-filled when the loss does not reach it.
    pub fn of(&self, v: Var) -> Tensor {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(v.rows, v.cols),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.id].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "scalar() on non-scalar var");
        t.data()[0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let id = self.nodes.len();
        let rows = value.rows();
        let cols = value.cols();
        self.nodes.push(Node { op, value });
        Var { id, rows, cols }
    }

    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(self.value(b));
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).mul_elem(self.value(b));
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).scale(k);
        self.push(Op::Scale(a, k), v)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x + k);
        self.push(Op::AddScalar(a), v)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a).add_row(self.value(row));
        self.push(Op::AddRow(a, row), v)
    }

    pub fn sub_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a).sub_row(self.value(row));
        self.push(Op::SubRow(a, row), v)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a).mul_row(self.value(row));
        self.push(Op::MulRow(a, row), v)
    }

    pub fn div_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a).div_row(self.value(row));
        self.push(Op::DivRow(a, row), v)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_rows();
        self.push(Op::MeanRows(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).sigmoid();
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).tanh();
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).relu();
        self.push(Op::Relu(a), v)
    }

    pub fn sqrt_shift(&mut self, a: Var, shift: f64) -> Var {
        let v = self.value(a).sqrt_shift(shift);
        self.push(Op::SqrtShift(a), v)
    }

    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| math::ln(x.max(floor)));
        self.push(Op::LnClamped(a, floor), v)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).concat_cols(self.value(b));
        self.push(Op::ConcatCols(a, b), v)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice_cols(start, len);
        self.push(Op::SliceCols(a, start), v)
    }

    pub fn stack_rows(&mut self, parts: Vec<Var>) -> Var {
        assert!(!parts.is_empty());
        let values: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let out = crate::tensor::stack_rows(&values);
        self.push(Op::StackRows(parts), out)
    }

    pub fn row(&mut self, a: Var, r: usize) -> Var {
        let v = self.value(a).row_tensor(r);
        self.push(Op::Row(a, r), v)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(Op::Softmax(a), v)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = log_softmax_rows(self.value(a));
        self.push(Op::LogSoftmax(a), v)
    }

    pub fn gather(&mut self, table: Var, indices: Vec<usize>) -> Var {
        let out = crate::tensor::gather_rows(self.value(table), &indices);
        self.push(Op::Gather(table, indices), out)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Tensor::from_vec(1, 1, vec![self.value(a).sum()]);
        self.push(Op::SumAll(a), v)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let v = Tensor::from_vec(1, 1, vec![av.sum() / av.len() as f64]);
        self.push(Op::MeanAll(a), v)
    }

    /// Negative log-likelihood of picked entries of a log-probability matrix:
    /// `-sum_i a[i, targets[i]]`.
    pub fn nll_picked(&mut self, log_probs: Var, targets: Vec<usize>) -> Var {
        let lv = self.value(log_probs);
        assert_eq!(lv.rows(), targets.len());
        let mut s = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            s -= lv.at(i, t);
        }
        let v = Tensor::from_vec(1, 1, vec![s]);
        self.push(Op::NllPicked(log_probs, targets), v)
    }

    /// Mean squared error between two same-shape vars, as a scalar var.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean_all(sq)
    }

    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            (loss.rows, loss.cols),
            (1, 1),
            "backward() expects a scalar loss"
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::from_vec(1, 1, vec![1.0]));

        for id in (0..self.nodes.len()).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let accum = |grads: &mut [Option<Tensor>], v: Var, delta: Tensor| {
            match &mut grads[v.id] {
                Some(acc) => acc.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let bt = self.value(*b).transpose();
                accum(grads, *a, g.matmul(&bt));
                let at = self.value(*a).transpose();
                accum(grads, *b, at.matmul(g));
            }
            Op::Add(a, b) => {
                accum(grads, *a, g.clone());
                accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accum(grads, *a, g.clone());
                accum(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                accum(grads, *a, g.mul_elem(self.value(*b)));
                accum(grads, *b, g.mul_elem(self.value(*a)));
            }
            Op::Scale(a, k) => accum(grads, *a, g.scale(*k)),
            Op::AddScalar(a) => accum(grads, *a, g.clone()),
            Op::AddRow(a, row) => {
                accum(grads, *a, g.clone());
                accum(grads, *row, col_sums(g));
            }
            Op::SubRow(a, row) => {
                accum(grads, *a, g.clone());
                accum(grads, *row, col_sums(g).scale(-1.0));
            }
            Op::MulRow(a, row) => {
                let rv = self.value(*row);
                let mut da = g.clone();
                for r in 0..da.rows() {
                    for c in 0..da.cols() {
                        *da.at_mut(r, c) *= rv.at(0, c);
                    }
                }
                accum(grads, *a, da);
                accum(grads, *row, col_sums(&g.mul_elem(self.value(*a))));
            }
            Op::DivRow(a, row) => {
                let rv = self.value(*row);
                let mut da = g.clone();
                for r in 0..da.rows() {
                    for c in 0..da.cols() {
                        *da.at_mut(r, c) /= rv.at(0, c);
                    }
                }
                accum(grads, *a, da);
                // d/dr (a / r) = -a / r^2
                let av = self.value(*a);
                let mut dr = Tensor::zeros(1, rv.cols());
                for r in 0..av.rows() {
                    for c in 0..av.cols() {
                        let rc = rv.at(0, c);
                        *dr.at_mut(0, c) += -g.at(r, c) * av.at(r, c) / (rc * rc);
                    }
                }
                accum(grads, *row, dr);
            }
            Op::MeanRows(a) => {
                let m = self.value(*a).rows();
                let mut da = Tensor::zeros(m, g.cols());
                for r in 0..m {
                    for c in 0..g.cols() {
                        *da.at_mut(r, c) = g.at(0, c) / m as f64;
                    }
                }
                accum(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                accum(grads, *a, g.zip(y, |gi, yi| gi * yi * (1.0 - yi)));
            }
            Op::Tanh(a) => {
                let y = &node.value;
                accum(grads, *a, g.zip(y, |gi, yi| gi * (1.0 - yi * yi)));
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                accum(grads, *a, g.zip(x, |gi, xi| if xi > 0.0 { gi } else { 0.0 }));
            }
            Op::SqrtShift(a) => {
                let y = &node.value;
                accum(grads, *a, g.zip(y, |gi, yi| 0.5 * gi / yi));
            }
            Op::LnClamped(a, floor) => {
                let x = self.value(*a);
                accum(
                    grads,
                    *a,
                    g.zip(x, |gi, xi| if xi > *floor { gi / xi } else { 0.0 }),
                );
            }
            Op::Transpose(a) => accum(grads, *a, g.transpose()),
            Op::ConcatCols(a, b) => {
                accum(grads, *a, g.slice_cols(0, a.cols));
                accum(grads, *b, g.slice_cols(a.cols, b.cols));
            }
            Op::SliceCols(a, start) => {
                let mut da = Tensor::zeros(a.rows, a.cols);
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        *da.at_mut(r, start + c) = g.at(r, c);
                    }
                }
                accum(grads, *a, da);
            }
            Op::StackRows(parts) => {
                let mut r = 0;
                for p in parts {
                    let mut dp = Tensor::zeros(p.rows, p.cols);
                    for pr in 0..p.rows {
                        dp.set_row(pr, g.row(r));
                        r += 1;
                    }
                    accum(grads, *p, dp);
                }
            }
            Op::Row(a, r) => {
                let mut da = Tensor::zeros(a.rows, a.cols);
                da.set_row(*r, g.row(0));
                accum(grads, *a, da);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut da = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = (0..y.cols()).map(|c| g.at(r, c) * y.at(r, c)).sum();
                    for c in 0..y.cols() {
                        *da.at_mut(r, c) = y.at(r, c) * (g.at(r, c) - dot);
                    }
                }
                accum(grads, *a, da);
            }
            Op::LogSoftmax(a) => {
                let y = &node.value;
                let mut da = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let gsum: f64 = (0..y.cols()).map(|c| g.at(r, c)).sum();
                    for c in 0..y.cols() {
                        *da.at_mut(r, c) = g.at(r, c) - math::exp(y.at(r, c)) * gsum;
                    }
                }
                accum(grads, *a, da);
            }
            Op::Gather(table, indices) => {
                let mut dt = Tensor::zeros(table.rows, table.cols);
                for (r, &i) in indices.iter().enumerate() {
                    for c in 0..g.cols() {
                        *dt.at_mut(i, c) += g.at(r, c);
                    }
                }
                accum(grads, *table, dt);
            }
            Op::SumAll(a) => {
                accum(grads, *a, Tensor::filled(a.rows, a.cols, g.at(0, 0)));
            }
            Op::MeanAll(a) => {
                let n = (a.rows * a.cols) as f64;
                accum(grads, *a, Tensor::filled(a.rows, a.cols, g.at(0, 0) / n));
            }
            Op::NllPicked(a, targets) => {
                let mut da = Tensor::zeros(a.rows, a.cols);
                for (i, &t) in targets.iter().enumerate() {
                    *da.at_mut(i, t) -= g.at(0, 0);
                }
                accum(grads, *a, da);
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = x.row(r);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for c in 0..x.cols() {
            let e = math::exp(row[c] - mx);
            *out.at_mut(r, c) = e;
            z += e;
        }
        for c in 0..x.cols() {
            *out.at_mut(r, c) /= z;
        }
    }
    out
}

/// Row-wise log-softmax with max subtraction.
pub fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = x.row(r);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for c in 0..x.cols() {
            z += math::exp(row[c] - mx);
        }
        let lz = math::ln(z) + mx;
        for c in 0..x.cols() {
            *out.at_mut(r, c) = row[c] - lz;
        }
    }
    out
}

fn col_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            *out.at_mut(0, c) += g.at(r, c);
        }
    }
    out
}

/// Boxed closure form used by the finite-difference checker.
pub type LossFn<'a> = Box<dyn FnMut(&[Tensor]) -> f64 + 'a>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use crate::rng::seeded;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        Tensor::uniform(rows, cols, -1.0, 1.0, &mut seeded(seed))
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = random(3, 5, 1);
        let y = softmax_rows(&x);
        for r in 0..3 {
            let s: f64 = y.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(y.row(r).iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn grad_matmul_chain_matches_fd() {
        let a = random(2, 3, 2);
        let b = random(3, 4, 3);
        let params = [a, b];
        let rel = gradcheck::check(&params, 1e-5, |t, leaves| {
            let c = t.matmul(leaves[0], leaves[1]);
            let s = t.tanh(c);
            t.sum_all(s)
        });
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn grad_broadcast_and_norm_ops_match_fd() {
        let x = random(4, 3, 4);
        let gamma = random(1, 3, 5);
        let beta = random(1, 3, 6);
        let params = [x, gamma, beta];
        let rel = gradcheck::check(&params, 1e-5, |t, leaves| {
            let (x, gamma, beta) = (leaves[0], leaves[1], leaves[2]);
            // batch-norm style composition
            let mu = t.mean_rows(x);
            let centered = t.sub_row(x, mu);
            let sq = t.mul(centered, centered);
            let var = t.mean_rows(sq);
            let std = t.sqrt_shift(var, 1e-5);
            let xhat = t.div_row(centered, std);
            let scaled = t.mul_row(xhat, gamma);
            let y = t.add_row(scaled, beta);
            let sq2 = t.mul(y, y);
            t.mean_all(sq2)
        });
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn grad_softmax_logsoftmax_match_fd() {
        let x = random(3, 6, 7);
        let w = random(6, 6, 8);
        let params = [x, w];
        let rel = gradcheck::check(&params, 1e-5, |t, leaves| {
            let logits = t.matmul(leaves[0], leaves[1]);
            let sm = t.softmax(logits);
            let ln = t.ln_clamped(sm, 1e-12);
            let picked = t.nll_picked(ln, vec![0, 3, 5]);
            t.scale(picked, 1.0 / 3.0)
        });
        assert!(rel < 1e-6, "relative error {rel}");

        let x2 = random(3, 6, 9);
        let params2 = [x2];
        let rel2 = gradcheck::check(&params2, 1e-5, |t, leaves| {
            let ls = t.log_softmax(leaves[0]);
            t.nll_picked(ls, vec![1, 2, 4])
        });
        assert!(rel2 < 1e-6, "relative error {rel2}");
    }

    #[test]
    fn grad_gather_concat_slice_stack_match_fd() {
        let table = random(5, 3, 10);
        let params = [table];
        let rel = gradcheck::check(&params, 1e-5, |t, leaves| {
            let rows = t.gather(leaves[0], vec![0, 2, 2, 4]);
            let a = t.slice_cols(rows, 0, 2);
            let b = t.slice_cols(rows, 1, 2);
            let cat = t.concat_cols(a, b);
            let r0 = t.row(cat, 0);
            let r2 = t.row(cat, 2);
            let stacked = t.stack_rows(vec![r0, r2]);
            let s = t.sigmoid(stacked);
            t.sum_all(s)
        });
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn duplicate_parent_accumulates() {
        // d(x*x)/dx = 2x
        let x = Tensor::from_vec(1, 2, vec![3.0, -2.0]);
        let mut t = Tape::new();
        let xv = t.leaf(&x);
        let sq = t.mul(xv, xv);
        let loss = t.sum_all(sq);
        let g = t.backward(loss);
        assert_eq!(g.of(xv).data(), &[6.0, -4.0]);
    }
}
