//! Review-level recursive autoencoder. Sentence embeddings are merged along
//! a left-leaning chain — y_2 = tanh(W (e_1 : e_2) + b), then
//! y_k = tanh(W (y_{k-1} : e_k) + b) — and the root is unfolded back into
//! sentence embeddings with a mirrored expansion network. Trained by
//! per-layer reconstruction of the concatenated children.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::optim::{clip_global_norm, scheduled_lr, Adam};
use crate::seq2seq::SentenceEmbedding;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A review embedding: the root of the merge chain plus the sentence count
/// the unfold recursion needs to stop.
#[derive(Clone, Debug, PartialEq)]
pub struct ReviewEmbedding {
    pub vector: Tensor,
    pub sentence_count: usize,
}

impl ReviewEmbedding {
    pub fn new(vector: Tensor, sentence_count: usize) -> Self {
        assert!(sentence_count >= 1, "a review has at least one sentence");
        assert_eq!(vector.rows(), 1);
        ReviewEmbedding {
            vector,
            sentence_count,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.cols()
    }
}

#[derive(Clone, Debug)]
pub struct RecursiveAutoencoder {
    /// Merge weights, 2d x d.
    pub merge_w: Tensor,
    pub merge_b: Tensor,
    /// Unfold weights, d x 2d.
    pub unfold_w: Tensor,
    pub unfold_b: Tensor,
}

impl RecursiveAutoencoder {
    pub fn init<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Self {
        RecursiveAutoencoder {
            merge_w: Tensor::uniform(2 * dim, dim, -scale, scale, rng),
            merge_b: Tensor::zeros(1, dim),
            unfold_w: Tensor::uniform(dim, 2 * dim, -scale, scale, rng),
            unfold_b: Tensor::zeros(1, 2 * dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.merge_w.cols()
    }

    fn merge(&self, left: &Tensor, right: &Tensor) -> Tensor {
        left.concat_cols(right)
            .matmul(&self.merge_w)
            .add_row(&self.merge_b)
            .tanh()
    }

    fn unfold(&self, node: &Tensor) -> (Tensor, Tensor) {
        let pair = node
            .matmul(&self.unfold_w)
            .add_row(&self.unfold_b)
            .tanh();
        let d = self.dim();
        (pair.slice_cols(0, d), pair.slice_cols(d, d))
    }

    /// Fold sentence embeddings into a review embedding. A single sentence
    /// passes through unchanged (no merge exists). Panics on an empty list.
    pub fn encode_review(&self, sentences: &[SentenceEmbedding]) -> ReviewEmbedding {
        assert!(!sentences.is_empty(), "cannot encode an empty review");
        let mut node = sentences[0].clone();
        for e in &sentences[1..] {
            node = self.merge(&node, e);
        }
        ReviewEmbedding::new(node, sentences.len())
    }

    /// Unfold a review embedding back into `sentence_count` sentence
    /// embeddings, assembled bottom-up.
    pub fn decode_review(&self, root: &ReviewEmbedding) -> Vec<SentenceEmbedding> {
        let mut out = vec![Tensor::zeros(1, root.dim()); root.sentence_count];
        let mut node = root.vector.clone();
        for k in (1..root.sentence_count).rev() {
            let (parent, leaf) = self.unfold(&node);
            out[k] = leaf;
            node = parent;
        }
        out[0] = node;
        out
    }

    pub fn leaves(&self, tape: &mut Tape) -> RecursiveVars {
        RecursiveVars {
            merge_w: tape.leaf(&self.merge_w),
            merge_b: tape.leaf(&self.merge_b),
            unfold_w: tape.leaf(&self.unfold_w),
            unfold_b: tape.leaf(&self.unfold_b),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            (String::from("merge_w"), &self.merge_w),
            (String::from("merge_b"), &self.merge_b),
            (String::from("unfold_w"), &self.unfold_w),
            (String::from("unfold_b"), &self.unfold_b),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            (String::from("merge_w"), &mut self.merge_w),
            (String::from("merge_b"), &mut self.merge_b),
            (String::from("unfold_w"), &mut self.unfold_w),
            (String::from("unfold_b"), &mut self.unfold_b),
        ]
    }
}

#[derive(Clone, Copy)]
pub struct RecursiveVars {
    pub merge_w: Var,
    pub merge_b: Var,
    pub unfold_w: Var,
    pub unfold_b: Var,
}

impl RecursiveVars {
    pub fn all(&self) -> [Var; 4] {
        [self.merge_w, self.merge_b, self.unfold_w, self.unfold_b]
    }

    fn merge(&self, tape: &mut Tape, left: Var, right: Var) -> Var {
        let cat = tape.concat_cols(left, right);
        let proj = tape.matmul(cat, self.merge_w);
        let shifted = tape.add_row(proj, self.merge_b);
        tape.tanh(shifted)
    }

    /// Sum of per-layer reconstruction losses for one review: at every merge
    /// node, mean squared error between the concatenated children and the
    /// unfold of the parent. Returns `None` for single-sentence reviews
    /// (zero merge layers).
    pub fn review_loss(&self, tape: &mut Tape, sentences: &[Var]) -> Option<Var> {
        if sentences.len() < 2 {
            return None;
        }
        let mut node = sentences[0];
        let mut losses = Vec::with_capacity(sentences.len() - 1);
        for &e in &sentences[1..] {
            let children = tape.concat_cols(node, e);
            let parent = self.merge_from_children(tape, children);
            let proj = tape.matmul(parent, self.unfold_w);
            let shifted = tape.add_row(proj, self.unfold_b);
            let recon = tape.tanh(shifted);
            losses.push(tape.mse(recon, children));
            node = parent;
        }
        let mut total = losses[0];
        for &l in &losses[1..] {
            total = tape.add(total, l);
        }
        Some(total)
    }

    fn merge_from_children(&self, tape: &mut Tape, children: Var) -> Var {
        let proj = tape.matmul(children, self.merge_w);
        let shifted = tape.add_row(proj, self.merge_b);
        tape.tanh(shifted)
    }
}

#[derive(Clone, Debug)]
pub struct RecTrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub halve_every: usize,
    pub clip_norm: f64,
}

impl Default for RecTrainConfig {
    fn default() -> Self {
        RecTrainConfig {
            epochs: 200,
            initial_lr: 1e-3,
            halve_every: 50,
            clip_norm: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RecTrainHistory {
    /// Mean per-layer loss per epoch (zero when the corpus has no merge
    /// layers).
    pub epoch_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RecTrainError {
    NonFiniteLoss { epoch: usize, loss: f64 },
}

impl core::fmt::Display for RecTrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RecTrainError::NonFiniteLoss { epoch, loss } => {
                write!(f, "non-finite recursive loss {loss} at epoch {epoch}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for RecTrainError {}

/// Train merge/unfold weights on frozen sentence embeddings. Reviews with a
/// single sentence contribute no layers and no gradient.
pub fn train_recursive(
    model: &mut RecursiveAutoencoder,
    reviews: &[Vec<SentenceEmbedding>],
    config: &RecTrainConfig,
) -> Result<RecTrainHistory, RecTrainError> {
    let mut adam = Adam::new(&[
        (model.merge_w.rows(), model.merge_w.cols()),
        (model.merge_b.rows(), model.merge_b.cols()),
        (model.unfold_w.rows(), model.unfold_w.cols()),
        (model.unfold_b.rows(), model.unfold_b.cols()),
    ]);
    let mut history = RecTrainHistory::default();
    let layer_total: usize = reviews
        .iter()
        .map(|r| r.len().saturating_sub(1))
        .sum();

    for epoch in 1..=config.epochs {
        if layer_total == 0 {
            history.epoch_loss.push(0.0);
            continue;
        }
        let lr = scheduled_lr(config.initial_lr, epoch, config.halve_every);
        let mut tape = Tape::new();
        let vars = model.leaves(&mut tape);
        let mut review_losses = Vec::new();
        for review in reviews {
            let sent_vars: Vec<Var> = review.iter().map(|e| tape.leaf(e)).collect();
            if let Some(l) = vars.review_loss(&mut tape, &sent_vars) {
                review_losses.push(l);
            }
        }
        let mut total = review_losses[0];
        for &l in &review_losses[1..] {
            total = tape.add(total, l);
        }
        let loss = tape.scale(total, 1.0 / layer_total as f64);
        let loss_value = tape.scalar(loss);
        if !loss_value.is_finite() {
            return Err(RecTrainError::NonFiniteLoss {
                epoch,
                loss: loss_value,
            });
        }
        history.epoch_loss.push(loss_value);

        let grads = tape.backward(loss);
        let mut grad_tensors: Vec<Tensor> = vars.all().iter().map(|&v| grads.of(v)).collect();
        clip_global_norm(&mut grad_tensors, config.clip_norm);
        let mut params = model.named_params_mut();
        let mut param_refs: Vec<&mut Tensor> = params.iter_mut().map(|(_, t)| &mut **t).collect();
        adam.step(lr, &mut param_refs, &grad_tensors);
    }
    Ok(history)
}

/// Mean per-layer reconstruction loss without updating parameters.
pub fn recursive_loss(model: &RecursiveAutoencoder, reviews: &[Vec<SentenceEmbedding>]) -> f64 {
    let mut tape = Tape::new();
    let vars = model.leaves(&mut tape);
    let mut total = 0.0;
    let mut layers = 0usize;
    for review in reviews {
        let sent_vars: Vec<Var> = review.iter().map(|e| tape.leaf(e)).collect();
        if let Some(l) = vars.review_loss(&mut tape, &sent_vars) {
            total += tape.scalar(l);
            layers += review.len() - 1;
        }
    }
    if layers == 0 {
        0.0
    } else {
        total / layers as f64
    }
}

/// Cosine similarity between two 1 x d embeddings.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> f64 {
    let dot: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| x * y)
        .sum();
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use crate::rng::seeded;

    fn embeddings(n: usize, d: usize, seed: u64) -> Vec<SentenceEmbedding> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| Tensor::uniform(1, d, -0.9, 0.9, &mut rng))
            .collect()
    }

    #[test]
    fn single_sentence_passes_through_unchanged() {
        let rae = RecursiveAutoencoder::init(3, 0.2, &mut seeded(1));
        let e = embeddings(1, 3, 2);
        let root = rae.encode_review(&e);
        assert_eq!(root.vector, e[0]);
        assert_eq!(root.sentence_count, 1);
        let back = rae.decode_review(&root);
        assert_eq!(back, e);
    }

    #[test]
    fn two_sentence_merge_matches_equation() {
        let rae = RecursiveAutoencoder::init(3, 0.4, &mut seeded(3));
        let e = embeddings(2, 3, 4);
        let root = rae.encode_review(&e);
        let expect = e[0]
            .concat_cols(&e[1])
            .matmul(&rae.merge_w)
            .add_row(&rae.merge_b)
            .tanh();
        assert_eq!(root.vector, expect);
    }

    #[test]
    fn two_sentence_unfold_matches_equation() {
        let rae = RecursiveAutoencoder::init(3, 0.4, &mut seeded(5));
        let e = embeddings(2, 3, 6);
        let root = rae.encode_review(&e);
        let pair = root
            .vector
            .matmul(&rae.unfold_w)
            .add_row(&rae.unfold_b)
            .tanh();
        let decoded = rae.decode_review(&root);
        assert_eq!(decoded.len(), 2);
        assert_eq!(decoded[0], pair.slice_cols(0, 3));
        assert_eq!(decoded[1], pair.slice_cols(3, 3));
    }

    #[test]
    fn four_sentence_chain_matches_hand_unrolled_oracle() {
        // explicit sequential computation of the three merges at d = 3
        let rae = RecursiveAutoencoder::init(3, 0.5, &mut seeded(7));
        let e = embeddings(4, 3, 8);
        let got = rae.encode_review(&e);

        let merge_oracle = |l: &Tensor, r: &Tensor| -> Tensor {
            let mut out = Tensor::zeros(1, 3);
            for j in 0..3 {
                let mut s = rae.merge_b.at(0, j);
                for k in 0..3 {
                    s += l.at(0, k) * rae.merge_w.at(k, j);
                    s += r.at(0, k) * rae.merge_w.at(3 + k, j);
                }
                *out.at_mut(0, j) = libm::tanh(s);
            }
            out
        };
        let y2 = merge_oracle(&e[0], &e[1]);
        let y3 = merge_oracle(&y2, &e[2]);
        let y4 = merge_oracle(&y3, &e[3]);
        for j in 0..3 {
            assert!((got.vector.at(0, j) - y4.at(0, j)).abs() < 1e-12);
        }
        assert_eq!(got.sentence_count, 4);
    }

    #[test]
    fn encode_performs_n_minus_one_merges_bounded_by_tanh() {
        let rae = RecursiveAutoencoder::init(4, 0.5, &mut seeded(9));
        for n in 2..6 {
            let e = embeddings(n, 4, 10 + n as u64);
            let root = rae.encode_review(&e);
            assert!(root.vector.data().iter().all(|&x| x > -1.0 && x < 1.0));
            let back = rae.decode_review(&root);
            assert_eq!(back.len(), n);
        }
    }

    #[test]
    fn per_layer_loss_is_order_invariant_across_reviews() {
        let rae = RecursiveAutoencoder::init(3, 0.3, &mut seeded(11));
        let a = embeddings(3, 3, 12);
        let b = embeddings(2, 3, 13);
        let fwd = recursive_loss(&rae, &[a.clone(), b.clone()]);
        let rev = recursive_loss(&rae, &[b, a]);
        assert!((fwd - rev).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let rae = RecursiveAutoencoder::init(4, 0.3, &mut seeded(15));
        let review = embeddings(3, 4, 16);
        let params = [
            rae.merge_w.clone(),
            rae.merge_b.clone(),
            rae.unfold_w.clone(),
            rae.unfold_b.clone(),
        ];
        let rel = gradcheck::check(&params, 1e-5, |tape, leaves| {
            let vars = RecursiveVars {
                merge_w: leaves[0],
                merge_b: leaves[1],
                unfold_w: leaves[2],
                unfold_b: leaves[3],
            };
            let sent_vars: Vec<Var> = review.iter().map(|e| tape.leaf(e)).collect();
            vars.review_loss(tape, &sent_vars).unwrap()
        });
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn single_sentence_corpus_trains_as_noop() {
        let mut rae = RecursiveAutoencoder::init(3, 0.3, &mut seeded(17));
        let before = rae.merge_w.clone();
        let history = train_recursive(
            &mut rae,
            &[embeddings(1, 3, 18), embeddings(1, 3, 19)],
            &RecTrainConfig {
                epochs: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(history.epoch_loss, vec![0.0; 5]);
        assert_eq!(rae.merge_w, before);
    }

    #[test]
    fn overfit_two_sentence_review_drops_loss_tenfold() {
        let mut rae = RecursiveAutoencoder::init(4, 0.3, &mut seeded(21));
        let review = embeddings(2, 4, 22);
        let initial = recursive_loss(&rae, &[review.clone()]);
        train_recursive(
            &mut rae,
            &[review.clone()],
            &RecTrainConfig {
                epochs: 1000,
                initial_lr: 1e-2,
                halve_every: 400,
                clip_norm: 1.0,
            },
        )
        .unwrap();
        let final_loss = recursive_loss(&rae, &[review]);
        assert!(
            final_loss * 10.0 <= initial,
            "loss shrank only {initial} -> {final_loss}"
        );
    }

    #[test]
    fn overfit_three_sentence_round_trip_has_high_cosine() {
        let mut rae = RecursiveAutoencoder::init(4, 0.3, &mut seeded(23));
        let review = embeddings(3, 4, 24);
        train_recursive(
            &mut rae,
            &[review.clone()],
            &RecTrainConfig {
                epochs: 3000,
                initial_lr: 1e-2,
                halve_every: 1000,
                clip_norm: 1.0,
            },
        )
        .unwrap();
        let root = rae.encode_review(&review);
        let back = rae.decode_review(&root);
        for (orig, rec) in review.iter().zip(back.iter()) {
            let cos = cosine_similarity(orig, rec);
            assert!(cos >= 0.95, "cosine {cos}");
        }
    }
}
