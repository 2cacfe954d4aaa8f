//! Personalized decoding: a per-user writing-style vector multiplied
//! elementwise into the decoder's step distribution before token selection.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{Document, Sentence, Vocabulary, NUM_SPECIALS};
use crate::math;
use crate::recursive::{RecursiveAutoencoder, ReviewEmbedding};
use crate::rng::seeded;
use crate::seq2seq::decode::{decode_beam, decode_greedy, decode_sample, AeScorer, StepScorer};
use crate::seq2seq::SentenceAutoencoder;

/// Per-user word-usage weights over the vocabulary. The multiplicative
/// identity (all ones) is the cold-start value; specials always carry
/// weight 1.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleVector {
    pub user_id: String,
    pub weights: Vec<f64>,
    pub history_review_count: usize,
}

impl StyleVector {
    /// Cold-start identity: every token weight 1.
    pub fn identity(user_id: &str, vocab_size: usize) -> Self {
        StyleVector {
            user_id: user_id.to_string(),
            weights: vec![1.0; vocab_size],
            history_review_count: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.history_review_count == 0
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.len()
    }
}

/// Count word usage over a user's history and convert to multiplicative
/// weights: smoothed relative frequency scaled so that the no-information
/// weight is exactly 1 (an empty history yields the identity vector, and the
/// weight ratio of two tokens is (count_a + 1) / (count_b + 1)). Specials
/// are exempt from counting and pinned at 1.
pub fn build_style(history: &[Document], vocab: &Vocabulary) -> StyleVector {
    let v = vocab.size();
    if history.is_empty() {
        return StyleVector::identity(
            history.first().map(|d| d.user_id.as_str()).unwrap_or(""),
            v,
        );
    }
    let user_id = history[0].user_id.clone();
    let mut counts = vec![0u64; v];
    let mut total = 0u64;
    for doc in history {
        for sentence in &doc.sentences {
            for id in sentence.content_ids() {
                counts[id as usize] += 1;
                total += 1;
            }
        }
    }
    let content = vocab.content_size() as f64;
    let denom = total as f64 + content;
    let mut weights = vec![1.0; v];
    for id in NUM_SPECIALS as usize..v {
        weights[id] = (counts[id] as f64 + 1.0) * content / denom;
    }
    StyleVector {
        user_id,
        weights,
        history_review_count: history.len(),
    }
}

/// A normalized step distribution over the vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution {
    pub probabilities: Vec<f64>,
}

impl StepDistribution {
    pub fn new(probabilities: Vec<f64>) -> Self {
        StepDistribution { probabilities }
    }

    pub fn sum(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PersonalizeOutcome {
    /// Weights applied and renormalized.
    Applied,
    /// Identity style: distribution returned unchanged.
    Identity,
    /// Elementwise product summed to zero; distribution returned unchanged.
    DegeneratePassthrough,
}

/// W' proportional to W (elementwise) W_style, renormalized to sum 1. An
/// identity style returns the input bit-for-bit; a degenerate zero-sum
/// product falls back to the input with a warning flag.
pub fn personalize_step(
    dist: &StepDistribution,
    style: &StyleVector,
) -> (StepDistribution, PersonalizeOutcome) {
    assert_eq!(
        dist.probabilities.len(),
        style.weights.len(),
        "style dimension mismatch"
    );
    if style.is_identity() {
        return (dist.clone(), PersonalizeOutcome::Identity);
    }
    let product: Vec<f64> = dist
        .probabilities
        .iter()
        .zip(style.weights.iter())
        .map(|(&p, &w)| p * w)
        .collect();
    let z: f64 = product.iter().sum();
    if z <= 0.0 || !z.is_finite() {
        return (dist.clone(), PersonalizeOutcome::DegeneratePassthrough);
    }
    (
        StepDistribution::new(product.iter().map(|&p| p / z).collect()),
        PersonalizeOutcome::Applied,
    )
}

/// Step scorer that personalizes a base scorer's distribution before token
/// selection. Log probabilities are recomputed from the reweighted
/// distribution so greedy, sampling, and beam scoring all see the
/// personalized probabilities.
pub struct PersonalizedScorer<'a, S: StepScorer> {
    pub base: &'a S,
    pub style: &'a StyleVector,
}

impl<'a, S: StepScorer> StepScorer for PersonalizedScorer<'a, S> {
    type State = S::State;

    fn start(&self) -> Self::State {
        self.base.start()
    }

    fn step(&self, state: &Self::State, prev_token: u32) -> (Self::State, Vec<f64>) {
        let (next, log_probs) = self.base.step(state, prev_token);
        if self.style.is_identity() {
            return (next, log_probs);
        }
        let probs: Vec<f64> = log_probs.iter().map(|&lp| math::exp(lp)).collect();
        let (personalized, _) = personalize_step(&StepDistribution::new(probs), self.style);
        let out = personalized
            .probabilities
            .iter()
            .map(|&p| math::ln(p.max(1e-300)))
            .collect();
        (next, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    Greedy,
    Sample,
}

/// Unfold a review embedding into sentence embeddings and decode each
/// sentence with the style-reweighted distribution. Deterministic under
/// greedy decoding or a fixed seed.
#[allow(clippy::too_many_arguments)]
pub fn decode_personalized(
    seq: &SentenceAutoencoder,
    recursive: &RecursiveAutoencoder,
    root: &ReviewEmbedding,
    style: &StyleVector,
    mode: SamplingMode,
    seed: u64,
    max_len: usize,
    user_id: &str,
    product_id: &str,
) -> Document {
    let sentence_embeddings = recursive.decode_review(root);
    let mut rng = seeded(seed);
    let sentences: Vec<Sentence> = sentence_embeddings
        .iter()
        .map(|emb| {
            let base = AeScorer {
                model: seq,
                embedding: emb,
            };
            let scorer = PersonalizedScorer { base: &base, style };
            match mode {
                SamplingMode::Greedy => decode_greedy(&scorer, max_len),
                SamplingMode::Sample => decode_sample(&scorer, max_len, &mut rng),
            }
        })
        .collect();
    Document {
        sentences,
        user_id: user_id.to_string(),
        product_id: product_id.to_string(),
        sentiment: None,
        stars: 0,
    }
}

/// Beam decoding of a single sentence embedding under a style.
pub fn decode_beam_personalized(
    seq: &SentenceAutoencoder,
    embedding: &crate::tensor::Tensor,
    style: &StyleVector,
    beam: usize,
    max_len: usize,
) -> Sentence {
    let base = AeScorer {
        model: seq,
        embedding,
    };
    let scorer = PersonalizedScorer { base: &base, style };
    decode_beam(&scorer, beam, max_len)
}

/// Render a style vector in its persisted sparse form: one
/// "token_id<TAB>weight" line per non-special token, preceded by a history
/// count header.
pub fn style_to_text(style: &StyleVector) -> String {
    let mut out = String::new();
    out.push_str(&alloc::format!("# history_reviews\t{}\n", style.history_review_count));
    for (id, &w) in style.weights.iter().enumerate() {
        if id < NUM_SPECIALS as usize {
            continue;
        }
        if w != 1.0 {
            out.push_str(&alloc::format!("{id}\t{w:.17e}\n"));
        }
    }
    out
}

/// Parse the persisted form. Tokens absent from the file carry weight 1.
pub fn style_from_text(
    user_id: &str,
    text: &str,
    vocab_size: usize,
) -> Result<StyleVector, StyleParseError> {
    let mut weights = vec![1.0; vocab_size];
    let mut history = 0usize;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# history_reviews\t") {
            history = rest.parse().map_err(|_| StyleParseError::BadLine(n + 1))?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let id: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(StyleParseError::BadLine(n + 1))?;
        let w: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(StyleParseError::BadLine(n + 1))?;
        if id >= vocab_size || w < 0.0 {
            return Err(StyleParseError::BadLine(n + 1));
        }
        weights[id] = w;
    }
    Ok(StyleVector {
        user_id: user_id.to_string(),
        weights,
        history_review_count: history,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StyleParseError {
    BadLine(usize),
}

impl core::fmt::Display for StyleParseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StyleParseError::BadLine(n) => write!(f, "style file line {n} is malformed"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for StyleParseError {}
