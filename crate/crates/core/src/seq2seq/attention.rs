//! Self-attention over encoder states with clipped relative-position key
//! embeddings: e_ij = q_i . (k_j + a_{j-i})^T / sqrt(dim), alpha = softmax,
//! h_i = sum_j alpha_ij v_j.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::tape::{softmax_rows, Tape, Var};
use crate::tensor::{gather_rows, stack_rows, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayer {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    /// (2 * clip + 1) x dim table of relative-offset key embeddings.
    pub rel_emb: Tensor,
    pub clip: usize,
}

impl AttentionLayer {
    pub fn init<R: Rng + ?Sized>(dim: usize, clip: usize, scale: f64, rng: &mut R) -> Self {
        AttentionLayer {
            w_q: Tensor::uniform(dim, dim, -scale, scale, rng),
            w_k: Tensor::uniform(dim, dim, -scale, scale, rng),
            w_v: Tensor::uniform(dim, dim, -scale, scale, rng),
            rel_emb: Tensor::uniform(2 * clip + 1, dim, -scale, scale, rng),
            clip,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    /// Table row for the clipped offset j - i.
    pub fn offset_index(&self, i: usize, j: usize) -> usize {
        let c = self.clip as isize;
        let off = (j as isize - i as isize).clamp(-c, c);
        (off + c) as usize
    }

    /// Attend over a T x dim state matrix; length-1 sequences degenerate to
    /// the value projection of the single state.
    pub fn forward(&self, states: &Tensor) -> Tensor {
        assert!(states.rows() >= 1, "attention needs at least one state");
        assert_eq!(states.cols(), self.dim());
        let t = states.rows();
        let q = states.matmul(&self.w_q);
        let k = states.matmul(&self.w_k);
        let v = states.matmul(&self.w_v);
        let scale = 1.0 / math::sqrt(self.dim() as f64);

        let mut rows: Vec<Tensor> = Vec::with_capacity(t);
        for i in 0..t {
            let offsets: Vec<usize> = (0..t).map(|j| self.offset_index(i, j)).collect();
            let rel = gather_rows(&self.rel_emb, &offsets);
            let keys = k.add(&rel);
            let qi = q.row_tensor(i);
            let logits = qi.matmul(&keys.transpose()).scale(scale);
            let alpha = softmax_rows(&logits);
            rows.push(alpha.matmul(&v));
        }
        let refs: Vec<&Tensor> = rows.iter().collect();
        stack_rows(&refs)
    }

    /// Attention weights for each query position (row-stochastic T x T).
    pub fn weights(&self, states: &Tensor) -> Tensor {
        let t = states.rows();
        let q = states.matmul(&self.w_q);
        let k = states.matmul(&self.w_k);
        let scale = 1.0 / math::sqrt(self.dim() as f64);
        let mut rows: Vec<Tensor> = Vec::with_capacity(t);
        for i in 0..t {
            let offsets: Vec<usize> = (0..t).map(|j| self.offset_index(i, j)).collect();
            let rel = gather_rows(&self.rel_emb, &offsets);
            let keys = k.add(&rel);
            let qi = q.row_tensor(i);
            let logits = qi.matmul(&keys.transpose()).scale(scale);
            rows.push(softmax_rows(&logits));
        }
        let refs: Vec<&Tensor> = rows.iter().collect();
        stack_rows(&refs)
    }

    pub fn leaves(&self, tape: &mut Tape) -> AttentionVars {
        AttentionVars {
            w_q: tape.leaf(&self.w_q),
            w_k: tape.leaf(&self.w_k),
            w_v: tape.leaf(&self.w_v),
            rel_emb: tape.leaf(&self.rel_emb),
            clip: self.clip,
        }
    }

    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("rel_emb", &self.rel_emb),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("rel_emb", &mut self.rel_emb),
        ]
    }
}

#[derive(Clone, Copy)]
pub struct AttentionVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub rel_emb: Var,
    pub clip: usize,
}

impl AttentionVars {
    fn offset_index(&self, i: usize, j: usize) -> usize {
        let c = self.clip as isize;
        let off = (j as isize - i as isize).clamp(-c, c);
        (off + c) as usize
    }

    /// Taped mirror of [`AttentionLayer::forward`].
    pub fn forward(&self, tape: &mut Tape, states: Var) -> Var {
        let t = states.rows();
        let dim = states.cols();
        let q = tape.matmul(states, self.w_q);
        let k = tape.matmul(states, self.w_k);
        let v = tape.matmul(states, self.w_v);
        let scale = 1.0 / math::sqrt(dim as f64);

        let mut rows: Vec<Var> = Vec::with_capacity(t);
        for i in 0..t {
            let offsets: Vec<usize> = (0..t).map(|j| self.offset_index(i, j)).collect();
            let rel = tape.gather(self.rel_emb, offsets);
            let keys = tape.add(k, rel);
            let qi = tape.row(q, i);
            let keys_t = tape.transpose(keys);
            let logits = tape.matmul(qi, keys_t);
            let logits = tape.scale(logits, scale);
            let alpha = tape.softmax(logits);
            rows.push(tape.matmul(alpha, v));
        }
        tape.stack_rows(rows)
    }

    pub fn all(&self) -> [Var; 4] {
        [self.w_q, self.w_k, self.w_v, self.rel_emb]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use crate::rng::seeded;

    #[test]
    fn uniform_weights_when_all_logits_equal() {
        // zero q projection makes every logit zero -> alpha = 1/n
        let mut layer = AttentionLayer::init(3, 2, 0.2, &mut seeded(3));
        layer.w_q = Tensor::zeros(3, 3);
        let states = Tensor::uniform(4, 3, -1.0, 1.0, &mut seeded(4));
        let w = layer.weights(&states);
        for r in 0..4 {
            for c in 0..4 {
                assert!((w.at(r, c) - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_element_output_is_value_projection() {
        let layer = AttentionLayer::init(3, 2, 0.3, &mut seeded(5));
        let states = Tensor::uniform(1, 3, -1.0, 1.0, &mut seeded(6));
        let out = layer.forward(&states);
        let expect = states.matmul(&layer.w_v);
        for i in 0..3 {
            assert!((out.at(0, i) - expect.at(0, i)).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        // d=2, n=3: independent scalar softmax / weighted-sum evaluation
        let mut rng = seeded(7);
        let layer = AttentionLayer::init(2, 1, 0.7, &mut rng);
        let states = Tensor::uniform(3, 2, -1.0, 1.0, &mut rng);
        let got = layer.forward(&states);

        let d = 2usize;
        let n = 3usize;
        let proj = |m: &Tensor, r: usize, j: usize| -> f64 {
            (0..d).map(|k| states.at(r, k) * m.at(k, j)).sum()
        };
        for i in 0..n {
            // logits
            let mut e = vec![0.0f64; n];
            for j in 0..n {
                let off = ((j as isize - i as isize).clamp(-1, 1) + 1) as usize;
                let mut dot = 0.0;
                for c in 0..d {
                    let kj = proj(&layer.w_k, j, c) + layer.rel_emb.at(off, c);
                    dot += proj(&layer.w_q, i, c) * kj;
                }
                e[j] = dot / (d as f64).sqrt();
            }
            let mx = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = e.iter().map(|&x| (x - mx).exp()).sum();
            let alpha: Vec<f64> = e.iter().map(|&x| (x - mx).exp() / z).collect();
            for c in 0..d {
                let expect: f64 = (0..n).map(|j| alpha[j] * proj(&layer.w_v, j, c)).sum();
                assert!(
                    (got.at(i, c) - expect).abs() < 1e-12,
                    "({i},{c}): {} vs {expect}",
                    got.at(i, c)
                );
            }
        }
    }

    #[test]
    fn rows_are_probability_vectors() {
        let mut rng = seeded(9);
        for n in [1usize, 2, 5, 9] {
            let layer = AttentionLayer::init(4, 3, 0.5, &mut rng);
            let states = Tensor::uniform(n, 4, -2.0, 2.0, &mut rng);
            let w = layer.weights(&states);
            for r in 0..n {
                let sum: f64 = w.row(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "row {r} sums to {sum}");
                assert!(w.row(r).iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn taped_forward_is_bit_identical_to_plain() {
        let mut rng = seeded(13);
        let layer = AttentionLayer::init(3, 2, 0.4, &mut rng);
        let states = Tensor::uniform(5, 3, -1.0, 1.0, &mut rng);
        let plain = layer.forward(&states);
        let mut tape = Tape::new();
        let vars = layer.leaves(&mut tape);
        let sv = tape.leaf(&states);
        let out = vars.forward(&mut tape, sv);
        assert_eq!(tape.value(out), &plain);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(19);
        let layer = AttentionLayer::init(3, 2, 0.4, &mut rng);
        let states = Tensor::uniform(4, 3, -1.0, 1.0, &mut rng);
        let params: Vec<Tensor> = layer
            .named_params()
            .into_iter()
            .map(|(_, t)| t.clone())
            .chain([states])
            .collect();
        let clip = layer.clip;
        let rel = gradcheck::check(&params, 1e-5, |tape, leaves| {
            let vars = AttentionVars {
                w_q: leaves[0],
                w_k: leaves[1],
                w_v: leaves[2],
                rel_emb: leaves[3],
                clip,
            };
            let out = vars.forward(tape, leaves[4]);
            let sq = tape.mul(out, out);
            tape.sum_all(sq)
        });
        assert!(rel < 1e-4, "relative error {rel}");
    }
}
