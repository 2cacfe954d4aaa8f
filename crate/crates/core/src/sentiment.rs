//! Rule-based lexicon sentiment scorer: valence sum with negation and
//! intensity adjustment, normalized to a bounded compound score.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{detokenize, tokenize_words, Document, Sentiment, Vocabulary};
use crate::math;

/// Valence normalization constant: compound = S / sqrt(S^2 + 15).
const NORMALIZATION: f64 = 15.0;
/// A negator within the look-back window multiplies valence by this factor.
const NEGATION_FACTOR: f64 = -0.74;
/// Tokens scanned backwards for negators/intensifiers.
const LOOKBACK: usize = 3;

pub const DEFAULT_POSITIVE_THRESHOLD: f64 = 0.05;
pub const DEFAULT_NEGATIVE_THRESHOLD: f64 = -0.05;

const NEGATORS: [&str; 30] = [
    "not", "no", "never", "neither", "nor", "cannot", "can't", "cant", "won't", "wont", "isn't",
    "isnt", "don't", "dont", "doesn't", "doesnt", "didn't", "didnt", "wasn't", "wasnt", "aren't",
    "arent", "weren't", "werent", "shouldn't", "wouldn't", "couldn't", "hardly", "barely",
    "without",
];

const INTENSIFIERS: [(&str, f64); 28] = [
    ("absolutely", 1.30),
    ("amazingly", 1.30),
    ("completely", 1.30),
    ("considerably", 1.25),
    ("decidedly", 1.25),
    ("deeply", 1.30),
    ("enormously", 1.35),
    ("entirely", 1.30),
    ("especially", 1.25),
    ("exceptionally", 1.35),
    ("extremely", 1.35),
    ("fairly", 0.90),
    ("highly", 1.30),
    ("hugely", 1.35),
    ("incredibly", 1.35),
    ("kinda", 0.85),
    ("marginally", 0.80),
    ("mostly", 0.95),
    ("particularly", 1.25),
    ("pretty", 1.10),
    ("quite", 1.15),
    ("really", 1.25),
    ("remarkably", 1.30),
    ("slightly", 0.80),
    ("so", 1.20),
    ("somewhat", 0.85),
    ("totally", 1.30),
    ("very", 1.25),
];

#[derive(Clone, Debug)]
pub struct Lexicon {
    valence: BTreeMap<String, f64>,
    negators: BTreeSet<String>,
    intensifiers: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LexiconError {
    BadLine(usize),
    BadValence(usize),
    Empty,
}

impl core::fmt::Display for LexiconError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LexiconError::BadLine(n) => write!(f, "lexicon line {n}: expected token<TAB>valence"),
            LexiconError::BadValence(n) => write!(f, "lexicon line {n}: valence is not a number"),
            LexiconError::Empty => write!(f, "lexicon has no entries"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LexiconError {}

impl Lexicon {
    /// Parse the tab-separated "token<TAB>valence" format. Lines starting
    /// with `#` and blank lines are skipped.
    pub fn parse(text: &str) -> Result<Lexicon, LexiconError> {
        let mut valence = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let tok = parts.next().ok_or(LexiconError::BadLine(i + 1))?.trim();
            let val = parts.next().ok_or(LexiconError::BadLine(i + 1))?.trim();
            if tok.is_empty() {
                return Err(LexiconError::BadLine(i + 1));
            }
            let v: f64 = val.parse().map_err(|_| LexiconError::BadValence(i + 1))?;
            valence.insert(tok.to_lowercase(), v);
        }
        if valence.is_empty() {
            return Err(LexiconError::Empty);
        }
        Ok(Lexicon::with_valences(valence))
    }

    /// Build from a valence table using the built-in negator and intensifier
    /// sets.
    pub fn with_valences(valence: BTreeMap<String, f64>) -> Lexicon {
        Lexicon {
            valence,
            negators: NEGATORS.iter().map(|s| s.to_string()).collect(),
            intensifiers: INTENSIFIERS
                .iter()
                .map(|(s, m)| (s.to_string(), *m))
                .collect(),
        }
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.valence.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.valence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valence.is_empty()
    }

    pub fn is_negator(&self, token: &str) -> bool {
        self.negators.contains(token)
    }

    /// Flip the sign of every valence (sign-symmetry testing hook).
    pub fn negated(&self) -> Lexicon {
        Lexicon {
            valence: self.valence.iter().map(|(k, v)| (k.clone(), -v)).collect(),
            negators: self.negators.clone(),
            intensifiers: self.intensifiers.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SentimentClass {
    Positive,
    Negative,
    Neutral,
}

impl SentimentClass {
    pub fn polarity(self) -> Option<Sentiment> {
        match self {
            SentimentClass::Positive => Some(Sentiment::Positive),
            SentimentClass::Negative => Some(Sentiment::Negative),
            SentimentClass::Neutral => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentClass::Positive => "positive",
            SentimentClass::Negative => "negative",
            SentimentClass::Neutral => "neutral",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SentimentScore {
    /// Normalized valence sum in [-1, 1].
    pub compound: f64,
    pub class: SentimentClass,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub positive: f64,
    pub negative: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            positive: DEFAULT_POSITIVE_THRESHOLD,
            negative: DEFAULT_NEGATIVE_THRESHOLD,
        }
    }
}

impl Thresholds {
    pub fn classify(&self, compound: f64) -> SentimentClass {
        if compound >= self.positive {
            SentimentClass::Positive
        } else if compound <= self.negative {
            SentimentClass::Negative
        } else {
            SentimentClass::Neutral
        }
    }
}

/// Score a text: sum lexicon valences with negation (factor -0.74 within a
/// 3-token look-back) and intensifier multipliers, then normalize with
/// S / sqrt(S^2 + 15).
pub fn score(text: &str, lexicon: &Lexicon, thresholds: Thresholds) -> SentimentScore {
    let tokens = tokenize_words(text);
    let mut sum = 0.0;
    for (i, tok) in tokens.iter().enumerate() {
        let Some(base) = lexicon.valence(tok) else {
            continue;
        };
        let mut v = base;
        let start = i.saturating_sub(LOOKBACK);
        for prev in &tokens[start..i] {
            if let Some(mult) = lexicon.intensifiers.get(prev.as_str()) {
                v *= mult;
            }
            if lexicon.negators.contains(prev.as_str()) {
                v *= NEGATION_FACTOR;
            }
        }
        sum += v;
    }
    let compound = if sum == 0.0 {
        0.0
    } else {
        sum / math::sqrt(sum * sum + NORMALIZATION)
    };
    SentimentScore {
        compound,
        class: thresholds.classify(compound),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelSummary {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
}

/// Set each document's sentiment from its detokenized text. Neutral
/// documents keep `sentiment = None`, flagging them for exclusion from
/// adversarial conditioning.
pub fn label_corpus(
    docs: &mut [Document],
    vocab: &Vocabulary,
    lexicon: &Lexicon,
    thresholds: Thresholds,
) -> LabelSummary {
    let mut summary = LabelSummary::default();
    for doc in docs.iter_mut() {
        let text = document_text(doc, vocab);
        let s = score(&text, lexicon, thresholds);
        doc.sentiment = s.class.polarity();
        match s.class {
            SentimentClass::Positive => summary.positive += 1,
            SentimentClass::Negative => summary.negative += 1,
            SentimentClass::Neutral => summary.neutral += 1,
        }
    }
    summary
}

/// Whole-document surface text reconstructed from token ids.
pub fn document_text(doc: &Document, vocab: &Vocabulary) -> String {
    let parts: Vec<String> = doc
        .sentences
        .iter()
        .map(|s| detokenize(s, vocab))
        .collect();
    parts.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny_lexicon() -> Lexicon {
        let mut v = BTreeMap::new();
        v.insert("good".to_string(), 1.9);
        v.insert("great".to_string(), 3.1);
        v.insert("bad".to_string(), -2.5);
        v.insert("terrible".to_string(), -3.4);
        v.insert("love".to_string(), 3.2);
        Lexicon::with_valences(v)
    }

    #[test]
    fn empty_text_is_neutral_zero() {
        let s = score("", &tiny_lexicon(), Thresholds::default());
        assert_eq!(s.compound, 0.0);
        assert_eq!(s.class, SentimentClass::Neutral);
    }

    #[test]
    fn negation_flips_sign() {
        let lex = tiny_lexicon();
        let th = Thresholds::default();
        let plain = score("good", &lex, th);
        let negated = score("not good", &lex, th);
        assert!(negated.compound < 0.0);
        assert!(plain.compound > 0.0);
        assert!(negated.compound < plain.compound);
    }

    #[test]
    fn intensifier_amplifies() {
        let lex = tiny_lexicon();
        let th = Thresholds::default();
        let plain = score("good", &lex, th);
        let boosted = score("very good", &lex, th);
        assert!(boosted.compound > plain.compound);
        let damped = score("slightly good", &lex, th);
        assert!(damped.compound < plain.compound);
        assert!(damped.compound > 0.0);
    }

    #[test]
    fn compound_normalization_value() {
        // S = 1.9 -> c = 1.9 / sqrt(1.9^2 + 15)
        let s = score("good", &tiny_lexicon(), Thresholds::default());
        let expected = 1.9 / (1.9f64 * 1.9 + 15.0).sqrt();
        assert!((s.compound - expected).abs() < 1e-12);
    }

    #[test]
    fn sign_symmetry_under_lexicon_negation() {
        let lex = tiny_lexicon();
        let neg = lex.negated();
        let th = Thresholds::default();
        for text in [
            "good bad terrible",
            "very good",
            "not great",
            "love it but bad strings",
            "",
        ] {
            let a = score(text, &lex, th);
            let b = score(text, &neg, th);
            assert!(
                (a.compound + b.compound).abs() < 1e-12,
                "asymmetry on {text:?}"
            );
        }
    }

    #[test]
    fn appending_positive_word_never_decreases_compound() {
        // monotonicity holds when the appended word is not itself negated;
        // the fixtures end without trailing negators.
        let lex = tiny_lexicon();
        let th = Thresholds::default();
        for base in ["", "bad", "terrible bad", "good good", "the pick was fine"] {
            let before = score(base, &lex, th).compound;
            let mut extended = alloc::string::String::from(base);
            extended.push_str(" good");
            let after = score(&extended, &lex, th).compound;
            assert!(after >= before, "monotonicity failed on {base:?}");
        }
    }

    #[test]
    fn label_corpus_matches_standalone_scoring() {
        use crate::corpus::{build_vocab, document_from_text, RawRecord};
        let texts = [
            "good good great",
            "bad terrible",
            "the box arrived",
            "love it love it",
            "not good",
        ];
        let records: Vec<RawRecord> = texts
            .iter()
            .map(|t| RawRecord {
                user_id: "u".into(),
                product_id: "p".into(),
                review_text: (*t).into(),
                description_text: "".into(),
                stars: 3,
            })
            .collect();
        let vocab = build_vocab(&records, 100).unwrap();
        let mut docs: Vec<Document> = texts
            .iter()
            .map(|t| document_from_text(t, "u", "p", 3, &vocab, 32))
            .collect();
        let lex = tiny_lexicon();
        let th = Thresholds::default();
        let summary = label_corpus(&mut docs, &vocab, &lex, th);
        assert_eq!(summary.positive, 2);
        assert_eq!(summary.negative, 2);
        assert_eq!(summary.neutral, 1);
        for (doc, text) in docs.iter().zip(texts.iter()) {
            let direct = score(text, &lex, th);
            assert_eq!(doc.sentiment, direct.class.polarity(), "doc {text:?}");
        }
    }

    #[test]
    fn parse_rejects_garbage_and_accepts_comments() {
        let good = "# comment\nnice\t1.5\nawful\t-2.0\n";
        let lex = Lexicon::parse(good).unwrap();
        assert_eq!(lex.valence("nice"), Some(1.5));
        assert_eq!(lex.valence("awful"), Some(-2.0));

        assert_eq!(Lexicon::parse("nounit").unwrap_err(), LexiconError::BadLine(1));
        assert_eq!(
            Lexicon::parse("tok\tnotanumber").unwrap_err(),
            LexiconError::BadValence(1)
        );
        assert_eq!(Lexicon::parse("# empty\n").unwrap_err(), LexiconError::Empty);
        let _ = vec![0u8];
    }
}
