use std::collections::HashMap;
use std::sync::Arc;

use super::{InfillRequest, LabelWordsRequest, Scorer, ScorerError};
use crate::types::MASK;

/// Word list used by `mock:<seed>` when no vocabulary file is given.
pub const DEFAULT_VOCAB: &str = include_str!("../../data/mock_vocab.txt");

/// Mixture weight of the uniform component; every in-vocabulary token gets at
/// least `SMOOTHING / V`, and out-of-vocabulary tokens get exactly that.
pub const SMOOTHING: f64 = 1e-6;

/// Half-width of the seeded bigram logits.
const LOGIT_SPREAD: f64 = 3.0;

/// Logit bonus for tokens that also occur in the input pattern.
const CONTEXT_BOOST: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Uniform,
    Bigram,
}

#[derive(Debug)]
struct Model {
    seed: u64,
    kind: Kind,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
}

/// Deterministic offline stand-in for a pre-trained infilling model.
///
/// The bigram variant draws one logit per `(previous token, next token)` pair
/// from a seeded hash and adds a bonus for tokens present in the input
/// pattern, so its scores react to context. Probabilities depend only on the
/// seed, the vocabulary and the request text.
#[derive(Debug, Clone)]
pub struct MockScorer {
    model: Arc<Model>,
}

/// Lowercased tokens: words (letters, digits, inner apostrophes) and single
/// punctuation characters.
pub fn mock_tokens(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if matches!(c, '\'' | '’')
            && !word.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            word.push('\'');
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(if c == '’' { "'".to_string() } else { c.to_string() });
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl MockScorer {
    /// Seeded bigram model over `vocab` (deduplicated, lowercased).
    pub fn new<I, S>(seed: u64, vocab: I) -> Result<Self, ScorerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::build(seed, Kind::Bigram, vocab)
    }

    /// Every in-vocabulary token has probability `1 / V`.
    pub fn uniform<I, S>(vocab: I) -> Result<Self, ScorerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::build(0, Kind::Uniform, vocab)
    }

    pub fn with_default_vocab(seed: u64) -> Self {
        Self::new(seed, DEFAULT_VOCAB.split_whitespace()).expect("default vocabulary is non-empty")
    }

    fn build<I, S>(seed: u64, kind: Kind, vocab: I) -> Result<Self, ScorerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        for w in vocab {
            let w = w.as_ref().trim().to_lowercase();
            if !w.is_empty() && !index.contains_key(&w) {
                index.insert(w.clone(), words.len());
                words.push(w);
            }
        }
        if words.is_empty() {
            return Err(ScorerError::Config("mock backend needs a non-empty vocabulary".into()));
        }
        Ok(Self {
            model: Arc::new(Model {
                seed,
                kind,
                vocab: words,
                index,
            }),
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.model.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.model.vocab.len()
    }

    /// Probability given to out-of-vocabulary tokens, and the floor for all others.
    pub fn floor(&self) -> f64 {
        SMOOTHING / self.vocab_size() as f64
    }

    fn context(&self, input: &str) -> Vec<bool> {
        let mut seen = vec![false; self.vocab_size()];
        for t in mock_tokens(&input.replace(MASK, " ")) {
            if let Some(&i) = self.model.index.get(&t) {
                seen[i] = true;
            }
        }
        seen
    }

    /// Previous-token state: vocabulary index, `V` for sequence start, `V + 1`
    /// for an unknown token.
    fn state(&self, prev: Option<&str>) -> usize {
        match prev {
            None => self.vocab_size(),
            Some(t) => self.model.index.get(t).copied().unwrap_or(self.vocab_size() + 1),
        }
    }

    fn logit(&self, prev: usize, next: usize) -> f64 {
        let h = splitmix64(
            self.model.seed ^ splitmix64(((prev as u64) << 32) ^ next as u64 ^ 0x5bd1_e995),
        );
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        (2.0 * unit - 1.0) * LOGIT_SPREAD
    }

    fn distribution(&self, context: &[bool], prev: usize) -> Vec<f64> {
        let v = self.vocab_size();
        if self.model.kind == Kind::Uniform {
            return vec![1.0 / v as f64; v];
        }
        let logits: Vec<f64> = (0..v)
            .map(|w| self.logit(prev, w) + if context[w] { CONTEXT_BOOST } else { 0.0 })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let floor = SMOOTHING / v as f64;
        exps.iter().map(|e| (1.0 - SMOOTHING) * e / total + floor).collect()
    }

    /// Next-token distribution over the vocabulary after `prev` (`None` at the
    /// start of the mask slot).
    pub fn next_token_probs(&self, input: &str, prev: Option<&str>) -> Vec<f64> {
        self.distribution(&self.context(input), self.state(prev))
    }

    /// `log P(target | input, history)`: the target's tokens scored after the
    /// tokens of `history` have already been placed in the mask slot.
    pub fn continuation_log_prob(&self, input: &str, history: &str, target: &str) -> f64 {
        let context = self.context(input);
        let mut prev = mock_tokens(history).pop();
        let mut total = 0.0;
        for tok in mock_tokens(target) {
            let p = match self.model.index.get(&tok) {
                Some(&i) => self.distribution(&context, self.state(prev.as_deref()))[i],
                None => self.floor(),
            };
            total += p.ln();
            prev = Some(tok);
        }
        total
    }
}

impl Scorer for MockScorer {
    fn model_name(&self) -> String {
        match self.model.kind {
            Kind::Uniform => format!("mock-uniform(V={})", self.vocab_size()),
            Kind::Bigram => format!("mock-bigram(seed={}, V={})", self.model.seed, self.vocab_size()),
        }
    }

    fn infill_log_prob(&self, req: &InfillRequest) -> Result<f64, ScorerError> {
        if mock_tokens(&req.output_target).is_empty() {
            return Err(ScorerError::InvalidRequest {
                request_id: req.request_id.clone(),
                message: "target has no tokens".into(),
            });
        }
        Ok(self.continuation_log_prob(&req.input_pattern, "", &req.output_target))
    }

    fn label_word_probs(&self, req: &LabelWordsRequest) -> Result<Vec<f64>, ScorerError> {
        req.candidate_words
            .iter()
            .map(|w| {
                if mock_tokens(w).is_empty() {
                    return Err(ScorerError::CandidateNotEncodable {
                        request_id: req.request_id.clone(),
                        word: w.clone(),
                    });
                }
                Ok(self.continuation_log_prob(&req.input_pattern, "", w).exp())
            })
            .collect()
    }
}
