//! Teacher-forced reconstruction training for the sentence autoencoder:
//! mean token cross-entropy per batch, global gradient-norm clipping, and
//! the halving learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{Batch, Document, Sentence, SOS};
use crate::optim::{clip_global_norm, scheduled_lr, Adam};
use crate::tape::Tape;
use crate::tensor::{argmax, Tensor};

use super::decode::{decode_greedy, AeScorer};
use super::{AeVars, SentenceAutoencoder};

#[derive(Clone, Debug)]
pub struct SeqTrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    /// Halve the learning rate every this many epochs.
    pub halve_every: usize,
    /// Global gradient-norm threshold.
    pub clip_norm: f64,
}

impl Default for SeqTrainConfig {
    fn default() -> Self {
        SeqTrainConfig {
            epochs: 200,
            initial_lr: 1e-3,
            halve_every: 50,
            clip_norm: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    /// Mean token cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
    pub epoch_lr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    NonFiniteLoss { epoch: usize, loss: f64 },
    EmptyCorpus,
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::NonFiniteLoss { epoch, loss } => {
                write!(f, "non-finite loss {loss} at epoch {epoch}")
            }
            TrainError::EmptyCorpus => write!(f, "no batches to train on"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

/// Mean token cross-entropy of one batch plus its gradient contribution.
fn batch_loss_graph(tape: &mut Tape, vars: &AeVars, batch: &Batch) -> crate::tape::Var {
    let mut nlls = Vec::with_capacity(batch.rows());
    let mut total_tokens = 0usize;
    for r in 0..batch.rows() {
        let tokens = batch.sentence(r);
        total_tokens += tokens.len();
        let idx: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let xs = tape.gather(vars.embedding, idx.clone());
        let emb = SentenceAutoencoder::encode_graph(tape, vars, xs);
        let mut dec_idx = vec![SOS as usize];
        dec_idx.extend(idx[..idx.len() - 1].iter());
        let dec_inputs = tape.gather(vars.embedding, dec_idx);
        nlls.push(SentenceAutoencoder::decoder_nll_graph(
            tape, vars, emb, dec_inputs, tokens,
        ));
    }
    let mut total = nlls[0];
    for &n in &nlls[1..] {
        total = tape.add(total, n);
    }
    tape.scale(total, 1.0 / total_tokens as f64)
}

/// Reconstruction training over fixed batches. Returns per-epoch mean token
/// cross-entropy; aborts on a non-finite loss.
pub fn train_autoencoder(
    model: &mut SentenceAutoencoder,
    batches: &[Batch],
    config: &SeqTrainConfig,
) -> Result<TrainHistory, TrainError> {
    if batches.is_empty() || batches.iter().all(|b| b.rows() == 0) {
        return Err(TrainError::EmptyCorpus);
    }
    let shapes: Vec<(usize, usize)> = model
        .named_params()
        .iter()
        .map(|(_, t)| (t.rows(), t.cols()))
        .collect();
    let mut adam = Adam::new(&shapes);
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        let lr = scheduled_lr(config.initial_lr, epoch, config.halve_every);
        let mut weighted_loss = 0.0;
        let mut token_total = 0usize;
        for batch in batches {
            if batch.rows() == 0 {
                continue;
            }
            let mut tape = Tape::new();
            let vars = model.leaves(&mut tape);
            let loss = batch_loss_graph(&mut tape, &vars, batch);
            let loss_value = tape.scalar(loss);
            if !loss_value.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    loss: loss_value,
                });
            }
            weighted_loss += loss_value * batch.token_count() as f64;
            token_total += batch.token_count();

            let grads = tape.backward(loss);
            let mut grad_tensors: Vec<Tensor> =
                vars.all().iter().map(|&v| grads.of(v)).collect();
            clip_global_norm(&mut grad_tensors, config.clip_norm);
            let mut params = model.named_params_mut();
            let mut param_refs: Vec<&mut Tensor> =
                params.iter_mut().map(|(_, t)| &mut **t).collect();
            adam.step(lr, &mut param_refs, &grad_tensors);
        }
        history.epoch_loss.push(weighted_loss / token_total as f64);
        history.epoch_lr.push(lr);
    }
    Ok(history)
}

/// Mean token cross-entropy without updating parameters.
pub fn evaluate_loss(model: &SentenceAutoencoder, batches: &[Batch]) -> f64 {
    let mut weighted = 0.0;
    let mut tokens = 0usize;
    for batch in batches {
        for r in 0..batch.rows() {
            let sentence = Sentence {
                token_ids: batch.sentence(r).to_vec(),
            };
            let lps = model.sentence_log_probs(&sentence);
            weighted += -lps.iter().sum::<f64>();
            tokens += lps.len();
        }
    }
    weighted / tokens as f64
}

/// Fraction of tokens reproduced exactly by greedy decoding of each
/// sentence's own embedding.
pub fn reconstruction_accuracy(model: &SentenceAutoencoder, docs: &[Document]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for doc in docs {
        for sentence in &doc.sentences {
            let emb = model.encode_sentence(sentence);
            let scorer = AeScorer {
                model,
                embedding: &emb,
            };
            let decoded = decode_greedy(&scorer, sentence.len().max(1) + 4);
            total += sentence.len();
            for (i, &gold) in sentence.token_ids.iter().enumerate() {
                if decoded.token_ids.get(i) == Some(&gold) {
                    correct += 1;
                }
            }
        }
    }
    if total == 0 {
        return 0.0;
    }
    correct as f64 / total as f64
}

/// Greedy argmax agreement under teacher forcing; cheaper than full greedy
/// decoding when only a progress signal is needed.
pub fn teacher_forced_accuracy(model: &SentenceAutoencoder, docs: &[Document]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for doc in docs {
        for sentence in &doc.sentences {
            let emb = model.encode_sentence(sentence);
            let mut h = emb.clone();
            let mut prev = SOS;
            for &gold in &sentence.token_ids {
                let (h2, logits) = model.decoder_step(&h, prev);
                if argmax(logits.data()) as u32 == gold {
                    correct += 1;
                }
                total += 1;
                h = h2;
                prev = gold;
            }
        }
    }
    if total == 0 {
        return 0.0;
    }
    correct as f64 / total as f64
}
