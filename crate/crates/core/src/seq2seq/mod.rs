//! Sentence-level autoencoder: bidirectional GRU encoder with
//! relative-position self-attention (normalized, residual) fused into a
//! fixed-dimension sentence embedding, and a GRU decoder over the shared
//! word-embedding table.

pub mod attention;
pub mod decode;
pub mod gru;
pub mod train;

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::Rng;

pub use attention::{AttentionLayer, AttentionVars};
pub use decode::{decode_beam, decode_greedy, decode_sample, StepScorer};
pub use gru::{GruCell, GruVars};
pub use train::{train_autoencoder, SeqTrainConfig, TrainError, TrainHistory};

use crate::corpus::{Sentence, SOS};
use crate::tape::{log_softmax_rows, Tape, Var};
use crate::tensor::{gather_rows, Tensor};

/// Sentence embeddings are 1 x d row tensors.
pub type SentenceEmbedding = Tensor;

const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct SeqAeConfig {
    pub vocab_size: usize,
    /// Embedding and hidden dimension d.
    pub dim: usize,
    /// Relative-position clipping distance for attention.
    pub rel_clip: usize,
    /// Uniform initialization half-width.
    pub init_scale: f64,
}

impl SeqAeConfig {
    pub fn new(vocab_size: usize, dim: usize) -> Self {
        SeqAeConfig {
            vocab_size,
            dim,
            rel_clip: 8,
            init_scale: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SentenceAutoencoder {
    /// V x d word embeddings, shared by encoder and decoder input; row 0
    /// (pad) stays zero.
    pub embedding: Tensor,
    pub enc_fwd: GruCell,
    pub enc_bwd: GruCell,
    pub attn: AttentionLayer,
    /// Normalization of the attention output, per feature.
    pub bn_gamma: Tensor,
    pub bn_beta: Tensor,
    /// Projects the concatenated final forward/backward states (2d) to d.
    pub fuse_w: Tensor,
    pub fuse_b: Tensor,
    pub dec: GruCell,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl SentenceAutoencoder {
    pub fn init<R: Rng + ?Sized>(config: &SeqAeConfig, rng: &mut R) -> Self {
        let d = config.dim;
        let v = config.vocab_size;
        let s = config.init_scale;
        let mut embedding = Tensor::uniform(v, d, -s, s, rng);
        embedding.set_row(0, &vec![0.0; d]);
        SentenceAutoencoder {
            embedding,
            enc_fwd: GruCell::init(d, d, s, rng),
            enc_bwd: GruCell::init(d, d, s, rng),
            attn: AttentionLayer::init(2 * d, config.rel_clip, s, rng),
            bn_gamma: Tensor::filled(1, 2 * d, 1.0),
            bn_beta: Tensor::zeros(1, 2 * d),
            fuse_w: Tensor::uniform(2 * d, d, -s, s, rng),
            fuse_b: Tensor::zeros(1, d),
            dec: GruCell::init(d, d, s, rng),
            w_out: Tensor::uniform(d, v, -s, s, rng),
            b_out: Tensor::zeros(1, v),
        }
    }

    pub fn dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    /// Deterministic sentence embedding. Panics on an empty sentence.
    pub fn encode_sentence(&self, sentence: &Sentence) -> SentenceEmbedding {
        self.encode_tokens(&sentence.token_ids)
    }

    pub fn encode_tokens(&self, tokens: &[u32]) -> SentenceEmbedding {
        assert!(!tokens.is_empty(), "cannot encode an empty sentence");
        let idx: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let xs = gather_rows(&self.embedding, &idx);
        self.encode_rows(&xs)
    }

    /// Plain-path encoder over a T x d input matrix. Mirrors
    /// [`SentenceAutoencoder::encode_graph`] operation for operation.
    fn encode_rows(&self, xs: &Tensor) -> Tensor {
        let t_len = xs.rows();
        let d = self.dim();

        let mut hf = Vec::with_capacity(t_len);
        let mut h = Tensor::zeros(1, d);
        for t in 0..t_len {
            h = self.enc_fwd.step(&xs.row_tensor(t), &h);
            hf.push(h.clone());
        }
        let mut hb = vec![Tensor::zeros(1, d); t_len];
        let mut hrev = Tensor::zeros(1, d);
        for t in (0..t_len).rev() {
            hrev = self.enc_bwd.step(&xs.row_tensor(t), &hrev);
            hb[t] = hrev.clone();
        }
        let srows: Vec<Tensor> = (0..t_len).map(|t| hf[t].concat_cols(&hb[t])).collect();
        let refs: Vec<&Tensor> = srows.iter().collect();
        let states = crate::tensor::stack_rows(&refs);

        let attended = self.attn.forward(&states);
        let mu = attended.mean_rows();
        let centered = attended.sub_row(&mu);
        let var = centered.mul_elem(&centered).mean_rows();
        let std = var.sqrt_shift(BN_EPS);
        let xhat = centered.div_row(&std);
        let normed = xhat.mul_row(&self.bn_gamma).add_row(&self.bn_beta);
        let resid = states.add(&normed);

        let last = resid.row_tensor(t_len - 1).slice_cols(0, d);
        let first = resid.row_tensor(0).slice_cols(d, d);
        let fused = last.concat_cols(&first);
        fused.matmul(&self.fuse_w).add_row(&self.fuse_b)
    }

    /// Taped encoder over a T x d input var (gathered embedding rows).
    pub fn encode_graph(tape: &mut Tape, vars: &AeVars, xs: Var) -> Var {
        let t_len = xs.rows();
        let d = xs.cols();

        let mut hf = Vec::with_capacity(t_len);
        let mut h = tape.leaf(&Tensor::zeros(1, d));
        for t in 0..t_len {
            let x = tape.row(xs, t);
            h = vars.enc_fwd.step(tape, x, h);
            hf.push(h);
        }
        let mut hb = vec![h; t_len];
        let mut hrev = tape.leaf(&Tensor::zeros(1, d));
        for t in (0..t_len).rev() {
            let x = tape.row(xs, t);
            hrev = vars.enc_bwd.step(tape, x, hrev);
            hb[t] = hrev;
        }
        let srows: Vec<Var> = (0..t_len)
            .map(|t| tape.concat_cols(hf[t], hb[t]))
            .collect();
        let states = tape.stack_rows(srows);

        let attended = vars.attn.forward(tape, states);
        let mu = tape.mean_rows(attended);
        let centered = tape.sub_row(attended, mu);
        let sq = tape.mul(centered, centered);
        let var = tape.mean_rows(sq);
        let std = tape.sqrt_shift(var, BN_EPS);
        let xhat = tape.div_row(centered, std);
        let scaled = tape.mul_row(xhat, vars.bn_gamma);
        let normed = tape.add_row(scaled, vars.bn_beta);
        let resid = tape.add(states, normed);

        let last_row = tape.row(resid, t_len - 1);
        let last = tape.slice_cols(last_row, 0, d);
        let first_row = tape.row(resid, 0);
        let first = tape.slice_cols(first_row, d, d);
        let fused = tape.concat_cols(last, first);
        let proj = tape.matmul(fused, vars.fuse_w);
        tape.add_row(proj, vars.fuse_b)
    }

    /// Decoder recurrence: previous-token embedding in, next-token logits
    /// out.
    pub fn decoder_step(&self, hidden: &Tensor, prev_token: u32) -> (Tensor, Tensor) {
        let x = self.embedding.row_tensor(prev_token as usize);
        let h = self.dec.step(&x, hidden);
        let logits = h.matmul(&self.w_out).add_row(&self.b_out);
        (h, logits)
    }

    /// Teacher-forced natural-log probabilities of each gold token given the
    /// sentence's own embedding.
    pub fn sentence_log_probs(&self, sentence: &Sentence) -> Vec<f64> {
        let emb = self.encode_sentence(sentence);
        self.teacher_forced_log_probs(&emb, &sentence.token_ids)
    }

    /// Teacher-forced log probabilities of `targets` decoded from `embedding`.
    pub fn teacher_forced_log_probs(&self, embedding: &Tensor, targets: &[u32]) -> Vec<f64> {
        let mut h = embedding.clone();
        let mut prev = SOS;
        let mut out = Vec::with_capacity(targets.len());
        for &tok in targets {
            let (h2, logits) = self.decoder_step(&h, prev);
            let lp = log_softmax_rows(&logits);
            out.push(lp.at(0, tok as usize));
            h = h2;
            prev = tok;
        }
        out
    }

    /// Taped teacher-forced negative log-likelihood of one sentence.
    /// `dec_inputs` holds the gathered embedding rows for
    /// [sos, t_1, .., t_{n-1}].
    pub fn decoder_nll_graph(
        tape: &mut Tape,
        vars: &AeVars,
        h0: Var,
        dec_inputs: Var,
        targets: &[u32],
    ) -> Var {
        let t_len = targets.len();
        let mut h = h0;
        let mut logit_rows = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let x = tape.row(dec_inputs, t);
            h = vars.dec.step(tape, x, h);
            let proj = tape.matmul(h, vars.w_out);
            let logits = tape.add_row(proj, vars.b_out);
            logit_rows.push(logits);
        }
        let logits = tape.stack_rows(logit_rows);
        let log_probs = tape.log_softmax(logits);
        let targets: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
        tape.nll_picked(log_probs, targets)
    }

    pub fn leaves(&self, tape: &mut Tape) -> AeVars {
        AeVars {
            embedding: tape.leaf(&self.embedding),
            enc_fwd: self.enc_fwd.leaves(tape),
            enc_bwd: self.enc_bwd.leaves(tape),
            attn: self.attn.leaves(tape),
            bn_gamma: tape.leaf(&self.bn_gamma),
            bn_beta: tape.leaf(&self.bn_beta),
            fuse_w: tape.leaf(&self.fuse_w),
            fuse_b: tape.leaf(&self.fuse_b),
            dec: self.dec.leaves(tape),
            w_out: tape.leaf(&self.w_out),
            b_out: tape.leaf(&self.b_out),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![(String::from("embedding"), &self.embedding)];
        for (n, t) in self.enc_fwd.named_params() {
            out.push((format!("enc_fwd.{n}"), t));
        }
        for (n, t) in self.enc_bwd.named_params() {
            out.push((format!("enc_bwd.{n}"), t));
        }
        for (n, t) in self.attn.named_params() {
            out.push((format!("attn.{n}"), t));
        }
        out.push((String::from("bn_gamma"), &self.bn_gamma));
        out.push((String::from("bn_beta"), &self.bn_beta));
        out.push((String::from("fuse_w"), &self.fuse_w));
        out.push((String::from("fuse_b"), &self.fuse_b));
        for (n, t) in self.dec.named_params() {
            out.push((format!("dec.{n}"), t));
        }
        out.push((String::from("w_out"), &self.w_out));
        out.push((String::from("b_out"), &self.b_out));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let SentenceAutoencoder {
            embedding,
            enc_fwd,
            enc_bwd,
            attn,
            bn_gamma,
            bn_beta,
            fuse_w,
            fuse_b,
            dec,
            w_out,
            b_out,
        } = self;
        let mut out: Vec<(String, &mut Tensor)> = vec![(String::from("embedding"), embedding)];
        for (n, t) in enc_fwd.named_params_mut() {
            out.push((format!("enc_fwd.{n}"), t));
        }
        for (n, t) in enc_bwd.named_params_mut() {
            out.push((format!("enc_bwd.{n}"), t));
        }
        for (n, t) in attn.named_params_mut() {
            out.push((format!("attn.{n}"), t));
        }
        out.push((String::from("bn_gamma"), bn_gamma));
        out.push((String::from("bn_beta"), bn_beta));
        out.push((String::from("fuse_w"), fuse_w));
        out.push((String::from("fuse_b"), fuse_b));
        for (n, t) in dec.named_params_mut() {
            out.push((format!("dec.{n}"), t));
        }
        out.push((String::from("w_out"), w_out));
        out.push((String::from("b_out"), b_out));
        out
    }
}

/// Tape handles for every autoencoder parameter, in `named_params` order.
pub struct AeVars {
    pub embedding: Var,
    pub enc_fwd: GruVars,
    pub enc_bwd: GruVars,
    pub attn: AttentionVars,
    pub bn_gamma: Var,
    pub bn_beta: Var,
    pub fuse_w: Var,
    pub fuse_b: Var,
    pub dec: GruVars,
    pub w_out: Var,
    pub b_out: Var,
}

impl AeVars {
    /// All parameter vars in `named_params` order.
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        out.extend(self.enc_fwd.all());
        out.extend(self.enc_bwd.all());
        out.extend(self.attn.all());
        out.extend([self.bn_gamma, self.bn_beta, self.fuse_w, self.fuse_b]);
        out.extend(self.dec.all());
        out.extend([self.w_out, self.b_out]);
        out
    }

    /// Rebuild from a flat var list in `named_params` order.
    pub fn from_slice(leaves: &[Var], rel_clip: usize) -> AeVars {
        let gru = |o: usize| GruVars {
            w_z: leaves[o],
            u_z: leaves[o + 1],
            b_z: leaves[o + 2],
            w_r: leaves[o + 3],
            u_r: leaves[o + 4],
            b_r: leaves[o + 5],
            w_h: leaves[o + 6],
            u_h: leaves[o + 7],
            b_h: leaves[o + 8],
        };
        AeVars {
            embedding: leaves[0],
            enc_fwd: gru(1),
            enc_bwd: gru(10),
            attn: AttentionVars {
                w_q: leaves[19],
                w_k: leaves[20],
                w_v: leaves[21],
                rel_emb: leaves[22],
                clip: rel_clip,
            },
            bn_gamma: leaves[23],
            bn_beta: leaves[24],
            fuse_w: leaves[25],
            fuse_b: leaves[26],
            dec: gru(27),
            w_out: leaves[36],
            b_out: leaves[37],
        }
    }
}
