//! Core algorithms for the review generation pipeline: corpus handling,
//! lexicon sentiment scoring, sentence/review autoencoders, the conditional
//! adversarial stage, personalized decoding, and the evaluation battery
//! (n-gram metrics, transport distance, significance tests, linguistic laws).
//!
//! The crate is `no_std`-compatible (requires `alloc`); all file and terminal
//! IO lives in the companion `reviewgen` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod corpus;
pub mod gan;
pub mod gradcheck;
pub mod laws;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod recursive;
pub mod rng;
pub mod sentiment;
pub mod seq2seq;
pub mod stats;
pub mod style;
pub mod tape;
pub mod tensor;
pub mod transport;

pub use corpus::{Batch, Document, RawRecord, Sentence, Sentiment, Vocabulary};
pub use tensor::Tensor;
