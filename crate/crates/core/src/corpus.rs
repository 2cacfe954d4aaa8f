//! Review corpus handling: raw records, sentence splitting, tokenization,
//! vocabulary construction, and padded batching.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::rng::seeded;

/// Reserved vocabulary ids.
pub const PAD: u32 = 0;
pub const SOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const NUM_SPECIALS: u32 = 4;

pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sentiment {
    Positive,
    Negative,
}

impl Sentiment {
    pub fn flip(self) -> Sentiment {
        match self {
            Sentiment::Positive => Sentiment::Negative,
            Sentiment::Negative => Sentiment::Positive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Sentiment> {
        match s {
            "positive" | "pos" => Some(Sentiment::Positive),
            "negative" | "neg" => Some(Sentiment::Negative),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub user_id: String,
    pub product_id: String,
    pub review_text: String,
    pub description_text: String,
    pub stars: u8,
}

impl RawRecord {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.review_text.trim().is_empty() {
            return Err(CorpusError::EmptyReview);
        }
        if !(1..=5).contains(&self.stars) {
            return Err(CorpusError::BadStars(self.stars));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub token_ids: Vec<u32>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Token ids excluding pad/sos/eos/unk.
    pub fn content_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.token_ids.iter().copied().filter(|&t| t >= NUM_SPECIALS)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub sentences: Vec<Sentence>,
    pub user_id: String,
    pub product_id: String,
    /// Lexicon-assigned polarity; `None` marks a neutral review, excluded
    /// from adversarial conditioning.
    pub sentiment: Option<Sentiment>,
    /// Star rating retained for analysis only.
    pub stars: u8,
}

impl Document {
    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CorpusError {
    EmptyCorpus,
    EmptyReview,
    BadStars(u8),
    EmptySentence,
}

impl core::fmt::Display for CorpusError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CorpusError::EmptyCorpus => write!(f, "corpus contains no records"),
            CorpusError::EmptyReview => write!(f, "review text is empty"),
            CorpusError::BadStars(s) => write!(f, "star rating {s} outside 1..=5"),
            CorpusError::EmptySentence => write!(f, "sentence has no tokens"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CorpusError {}

/// Bidirectional token map with reserved specials at ids 0..=3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from (token, frequency) pairs: rank by frequency descending,
    /// ties broken lexicographically, keep at most `cap` non-special tokens.
    pub fn from_counts(counts: &BTreeMap<String, u64>, cap: usize) -> Vocabulary {
        let mut ranked: Vec<(&String, &u64)> = counts.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut id_to_token: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for (tok, _) in ranked.into_iter().take(cap) {
            id_to_token.push(tok.clone());
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    /// Reconstruct from the persisted one-token-per-line form (line number =
    /// id - 4).
    pub fn from_lines<'a>(lines: impl Iterator<Item = &'a str>) -> Vocabulary {
        let mut id_to_token: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for line in lines {
            id_to_token.push(line.to_owned());
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    /// Non-special vocabulary entries.
    pub fn content_size(&self) -> usize {
        self.size() - NUM_SPECIALS as usize
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    /// Non-special tokens in id order, as persisted.
    pub fn content_tokens(&self) -> &[String] {
        &self.id_to_token[NUM_SPECIALS as usize..]
    }
}

/// Split text into sentences on runs of `.`, `!`, `?`. A terminator run ends
/// the sentence even without trailing whitespace. Whitespace-only segments
/// are dropped; unterminated trailing text forms its own sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut in_terminator = false;
    for ch in text.chars() {
        let is_term = matches!(ch, '.' | '!' | '?');
        if is_term {
            current.push(ch);
            in_terminator = true;
        } else {
            if in_terminator {
                let trimmed = current.trim();
                if !trimmed.is_empty() {
                    out.push(trimmed.to_string());
                }
                current.clear();
                in_terminator = false;
            }
            current.push(ch);
        }
    }
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
    if out.is_empty() && !text.trim().is_empty() {
        out.push(text.trim().to_string());
    }
    out
}

/// Lowercase and split into word tokens: whitespace-separated, punctuation
/// split into its own tokens, apostrophes kept inside words ("don't").
pub fn tokenize_words(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    for (i, &ch) in chars.iter().enumerate() {
        if ch.is_alphanumeric() {
            word.push(ch);
        } else if ch == '\''
            && i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_alphanumeric()
            && chars[i + 1].is_alphanumeric()
        {
            word.push(ch);
        } else {
            if !word.is_empty() {
                tokens.push(core::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Map one sentence string to token ids, append eos, truncate to `max_len`
/// total (keeping eos). Out-of-vocabulary words map to unk.
pub fn tokenize(sentence: &str, vocab: &Vocabulary, max_len: usize) -> Sentence {
    assert!(max_len >= 1);
    let words = tokenize_words(sentence);
    let mut ids: Vec<u32> = words.iter().map(|w| vocab.id(w)).collect();
    if ids.len() > max_len - 1 {
        ids.truncate(max_len - 1);
    }
    ids.push(EOS);
    Sentence { token_ids: ids }
}

/// Inverse of [`tokenize`] up to casing and punctuation spacing: joins
/// non-special tokens with single spaces.
pub fn detokenize(sentence: &Sentence, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for id in sentence.content_ids() {
        if let Some(tok) = vocab.token(id) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(tok);
        }
    }
    out
}

/// All word tokens of a record (review plus description), for vocabulary
/// counting.
fn record_tokens(rec: &RawRecord) -> Vec<String> {
    let mut toks = Vec::new();
    for text in [&rec.review_text, &rec.description_text] {
        for sent in split_sentences(text) {
            toks.extend(tokenize_words(&sent));
        }
    }
    toks
}

/// Rank tokens by corpus frequency (ties lexicographic) and keep at most
/// `cap` plus the four specials.
pub fn build_vocab(records: &[RawRecord], cap: usize) -> Result<Vocabulary, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for rec in records {
        for tok in record_tokens(rec) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    Ok(Vocabulary::from_counts(&counts, cap))
}

/// Tokenize a text into a document (used for both reviews and product
/// descriptions).
pub fn document_from_text(
    text: &str,
    user_id: &str,
    product_id: &str,
    stars: u8,
    vocab: &Vocabulary,
    max_len: usize,
) -> Document {
    let sentences = split_sentences(text)
        .iter()
        .map(|s| tokenize(s, vocab, max_len))
        .collect();
    Document {
        sentences,
        user_id: user_id.to_owned(),
        product_id: product_id.to_owned(),
        sentiment: None,
        stars,
    }
}

/// Padded index batch. Rows are sentences, columns positions; `mask` is 1.0
/// at real tokens and 0.0 exactly at pad positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    tokens: Vec<u32>,
    rows: usize,
    cols: usize,
    lengths: Vec<usize>,
    mask: Vec<f64>,
}

impl Batch {
    fn from_sentences(sentences: &[&Sentence]) -> Batch {
        let rows = sentences.len();
        let cols = sentences.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut tokens = vec![PAD; rows * cols];
        let mut mask = vec![0.0; rows * cols];
        let mut lengths = Vec::with_capacity(rows);
        for (r, s) in sentences.iter().enumerate() {
            lengths.push(s.len());
            for (c, &t) in s.token_ids.iter().enumerate() {
                tokens[r * cols + c] = t;
                mask[r * cols + c] = 1.0;
            }
        }
        Batch {
            tokens,
            rows,
            cols,
            lengths,
            mask,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Padded length (max sentence length within the batch).
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    pub fn token(&self, r: usize, c: usize) -> u32 {
        self.tokens[r * self.cols + c]
    }

    /// The unpadded token ids of row `r`.
    pub fn sentence(&self, r: usize) -> &[u32] {
        &self.tokens[r * self.cols..r * self.cols + self.lengths[r]]
    }

    pub fn token_count(&self) -> usize {
        self.lengths.iter().sum()
    }
}

/// Shuffle all sentences across documents deterministically and group them
/// into padded batches. Every sentence appears exactly once.
pub fn make_batches(docs: &[Document], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut sentences: Vec<&Sentence> = docs.iter().flat_map(|d| d.sentences.iter()).collect();
    let mut rng = seeded(seed);
    sentences.shuffle(&mut rng);
    sentences
        .chunks(batch_size)
        .map(Batch::from_sentences)
        .collect()
}

/// Render the vocabulary in its persisted form: one non-special token per
/// line, line number = id - 4.
pub fn vocab_to_text(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for tok in vocab.content_tokens() {
        out.push_str(tok);
        out.push('\n');
    }
    out
}

/// Stable 64-bit FNV-1a hash of the persisted vocabulary text, used to bind
/// checkpoints to the vocabulary they were trained with.
pub fn vocab_fingerprint(vocab: &Vocabulary) -> u64 {
    let text = vocab_to_text(vocab);
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn vocab_fingerprint_hex(vocab: &Vocabulary) -> String {
    format!("{:016x}", vocab_fingerprint(vocab))
}
