//! Greedy, sampled, and beam-search decoding over an abstract step scorer.
//! The scorer abstraction lets the personalized decoder reweight step
//! distributions and lets tests drive the search with hand-built tables.

use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::{Sentence, EOS};
use crate::math;
use crate::tape::log_softmax_rows;
use crate::tensor::argmax;

use super::SentenceAutoencoder;

/// One decoding step: given the carried state and the previously emitted
/// token, produce the next state and natural-log probabilities over the
/// vocabulary.
pub trait StepScorer {
    type State: Clone;

    fn start(&self) -> Self::State;
    fn step(&self, state: &Self::State, prev_token: u32) -> (Self::State, Vec<f64>);
}

/// Argmax decoding until eos or `max_len` tokens.
pub fn decode_greedy<S: StepScorer>(scorer: &S, max_len: usize) -> Sentence {
    let mut state = scorer.start();
    let mut prev = crate::corpus::SOS;
    let mut tokens = Vec::new();
    for _ in 0..max_len {
        let (next, log_probs) = scorer.step(&state, prev);
        let tok = argmax(&log_probs) as u32;
        tokens.push(tok);
        if tok == EOS {
            break;
        }
        state = next;
        prev = tok;
    }
    Sentence { token_ids: tokens }
}

/// Categorical sampling from the step distribution until eos or `max_len`.
pub fn decode_sample<S: StepScorer, R: Rng + ?Sized>(
    scorer: &S,
    max_len: usize,
    rng: &mut R,
) -> Sentence {
    let mut state = scorer.start();
    let mut prev = crate::corpus::SOS;
    let mut tokens = Vec::new();
    for _ in 0..max_len {
        let (next, log_probs) = scorer.step(&state, prev);
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut tok = log_probs.len() as u32 - 1;
        for (i, &lp) in log_probs.iter().enumerate() {
            acc += math::exp(lp);
            if u < acc {
                tok = i as u32;
                break;
            }
        }
        tokens.push(tok);
        if tok == EOS {
            break;
        }
        state = next;
        prev = tok;
    }
    Sentence { token_ids: tokens }
}

struct Hypothesis<St> {
    tokens: Vec<u32>,
    score: f64,
    state: St,
    prev: u32,
}

/// Beam search returning the completed hypothesis with the highest
/// accumulated log probability. A hypothesis completes by emitting eos;
/// if none completes within `max_len` steps, the best running hypothesis is
/// returned. `beam = 1` reproduces [`decode_greedy`] token for token.
pub fn decode_beam<S: StepScorer>(scorer: &S, beam: usize, max_len: usize) -> Sentence {
    assert!(beam >= 1, "beam width must be at least 1");
    let mut active: Vec<Hypothesis<S::State>> = alloc::vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        state: scorer.start(),
        prev: crate::corpus::SOS,
    }];
    let mut finished: Vec<(Vec<u32>, f64)> = Vec::new();

    for _ in 0..max_len {
        if active.is_empty() {
            break;
        }
        // candidates in (hypothesis, token) order so that a stable sort on
        // score keeps the argmax-with-lowest-index tie rule of greedy search
        let mut candidates: Vec<(usize, u32, f64, S::State)> = Vec::new();
        for (hi, hyp) in active.iter().enumerate() {
            let (state, log_probs) = scorer.step(&hyp.state, hyp.prev);
            for (tok, &lp) in log_probs.iter().enumerate() {
                candidates.push((hi, tok as u32, hyp.score + lp, state.clone()));
            }
        }
        candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
        candidates.truncate(beam);

        let mut next_active = Vec::with_capacity(beam);
        for (hi, tok, score, state) in candidates {
            let mut tokens = active[hi].tokens.clone();
            tokens.push(tok);
            if tok == EOS {
                finished.push((tokens, score));
            } else {
                next_active.push(Hypothesis {
                    tokens,
                    score,
                    state,
                    prev: tok,
                });
            }
        }
        active = next_active;
    }

    let best_finished = finished
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let best_active = active
        .into_iter()
        .map(|h| (h.tokens, h.score))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let tokens = match (best_finished, best_active) {
        (Some(f), Some(a)) => {
            if f.1 >= a.1 {
                f.0
            } else {
                // a finished hypothesis wins only on score; an unfinished one
                // can still be ahead when max_len cut it off
                a.0
            }
        }
        (Some(f), None) => f.0,
        (None, Some(a)) => a.0,
        (None, None) => Vec::new(),
    };
    Sentence { token_ids: tokens }
}

/// Accumulated log probability of a token sequence under a scorer, for
/// comparing beam widths.
pub fn sequence_score<S: StepScorer>(scorer: &S, tokens: &[u32]) -> f64 {
    let mut state = scorer.start();
    let mut prev = crate::corpus::SOS;
    let mut total = 0.0;
    for &tok in tokens {
        let (next, log_probs) = scorer.step(&state, prev);
        total += log_probs[tok as usize];
        state = next;
        prev = tok;
    }
    total
}

/// Step scorer backed by the sentence autoencoder's GRU decoder, conditioned
/// on a sentence embedding as the initial hidden state.
pub struct AeScorer<'a> {
    pub model: &'a SentenceAutoencoder,
    pub embedding: &'a crate::tensor::Tensor,
}

impl<'a> StepScorer for AeScorer<'a> {
    type State = crate::tensor::Tensor;

    fn start(&self) -> Self::State {
        self.embedding.clone()
    }

    fn step(&self, state: &Self::State, prev_token: u32) -> (Self::State, Vec<f64>) {
        let (h, logits) = self.model.decoder_step(state, prev_token);
        let lp = log_softmax_rows(&logits);
        (h, lp.data().to_vec())
    }
}
