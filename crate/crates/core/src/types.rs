//! Domain types shared across the crate and the weighted ensemble of
//! evaluator scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::{self, Sentence, TextError};

/// Model-agnostic mask placeholder. Backends render it to their native token.
pub const MASK: &str = "«MASK»";

/// Tolerance on the sum of a weight distribution.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("no evaluators")]
    NoEvaluators,
    #[error("unnormalized weights (sum {0})")]
    UnnormalizedWeights(f64),
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("degenerate weights")]
    DegenerateWeights,
    #[error("pattern must contain {MASK} exactly once, found {0}")]
    MaskCount(usize),
    #[error("empty output target")]
    EmptyTarget,
    #[error("attribute set needs at least two labels")]
    TooFewLabels,
    #[error("duplicate attribute label {0:?}")]
    DuplicateLabel(String),
}

/// One input triple: prefix, attribute label and generated text, with the
/// segmentation and prefix split computed once at construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalInstance {
    prefix: String,
    label: String,
    generated_text: String,
    sentences: Vec<Sentence>,
    continuation: String,
}

impl EvalInstance {
    pub fn new(
        prefix: impl Into<String>,
        label: impl Into<String>,
        generated_text: impl Into<String>,
    ) -> Result<Self, TextError> {
        let prefix = prefix.into().trim().to_string();
        let generated_text = generated_text.into();
        let sentences = textproc::segment_sentences(&generated_text)?;
        let continuation = textproc::strip_prefix(&generated_text, &prefix)?
            .trim_end()
            .to_string();
        Ok(Self {
            prefix,
            label: label.into(),
            generated_text,
            sentences,
            continuation,
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn generated_text(&self) -> &str {
        &self.generated_text
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    /// The generated text with the literal prefix removed.
    pub fn continuation(&self) -> &str {
        &self.continuation
    }

    /// Same text, different label.
    pub fn with_label(&self, label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..self.clone()
        }
    }

    /// The generated text between the first and last sentence, without outer
    /// whitespace.
    pub fn trimmed_text(&self) -> &str {
        let first = self.sentences.first().map_or(0, |s| s.start);
        let last = self.sentences.last().map_or(0, |s| s.end);
        &self.generated_text[first..last]
    }
}

/// The ordered set of attribute labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct AttributeSet {
    labels: Vec<String>,
}

impl AttributeSet {
    pub fn new(labels: Vec<String>) -> Result<Self, CoreError> {
        if labels.len() < 2 {
            return Err(CoreError::TooFewLabels);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(CoreError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Position of `label`, matched case-insensitively.
    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .or_else(|| self.labels.iter().position(|l| l.eq_ignore_ascii_case(label)))
    }
}

impl TryFrom<Vec<String>> for AttributeSet {
    type Error = CoreError;
    fn try_from(v: Vec<String>) -> Result<Self, CoreError> {
        Self::new(v)
    }
}

impl From<AttributeSet> for Vec<String> {
    fn from(a: AttributeSet) -> Self {
        a.labels
    }
}

/// What a pattern evaluator asks the model to put in the mask slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTarget {
    /// A text span whose log-probability is the score.
    Text(String),
    /// One label word per attribute label, in attribute-set order.
    LabelWords(Vec<(String, String)>),
}

/// An input pattern with exactly one [`MASK`] and its expected output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEvaluator {
    pub id: String,
    pub input_pattern: String,
    pub output_target: OutputTarget,
}

/// Number of mask placeholders in `pattern`.
pub fn mask_count(pattern: &str) -> usize {
    pattern.matches(MASK).count()
}

impl PatternEvaluator {
    pub fn new(
        id: impl Into<String>,
        input_pattern: impl Into<String>,
        output_target: OutputTarget,
    ) -> Result<Self, CoreError> {
        let input_pattern = input_pattern.into();
        let masks = mask_count(&input_pattern);
        if masks != 1 {
            return Err(CoreError::MaskCount(masks));
        }
        let empty = match &output_target {
            OutputTarget::Text(t) => t.trim().is_empty(),
            OutputTarget::LabelWords(w) => w.is_empty() || w.iter().any(|(_, w)| w.is_empty()),
        };
        if empty {
            return Err(CoreError::EmptyTarget);
        }
        Ok(Self {
            id: id.into(),
            input_pattern,
            output_target,
        })
    }

    /// Target text, if this is a span evaluator.
    pub fn target_text(&self) -> Option<&str> {
        match &self.output_target {
            OutputTarget::Text(t) => Some(t),
            OutputTarget::LabelWords(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aspect {
    #[serde(rename = "coherence")]
    Coherence,
    #[serde(rename = "consistency")]
    Consistency,
    #[serde(rename = "attr_rel", alias = "attribute_relevance")]
    AttributeRelevance,
}

impl Aspect {
    pub const ALL: [Aspect; 3] = [Aspect::Coherence, Aspect::Consistency, Aspect::AttributeRelevance];

    /// Key used in evaluation-set and score files.
    pub fn key(self) -> &'static str {
        match self {
            Aspect::Coherence => "coherence",
            Aspect::Consistency => "consistency",
            Aspect::AttributeRelevance => "attr_rel",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Aspect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "coherence" | "coh" => Ok(Aspect::Coherence),
            "consistency" | "cons" => Ok(Aspect::Consistency),
            "attr_rel" | "attribute_relevance" | "ar" => Ok(Aspect::AttributeRelevance),
            other => Err(format!("unknown aspect {other:?}")),
        }
    }
}

/// Score and weight of one evaluator for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedScore {
    pub evaluator_id: String,
    #[serde(rename = "raw")]
    pub raw_score: f64,
    pub weight: f64,
}

impl WeightedScore {
    pub fn new(evaluator_id: impl Into<String>, raw_score: f64, weight: f64) -> Self {
        Self {
            evaluator_id: evaluator_id.into(),
            raw_score,
            weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectScore {
    pub aspect: Aspect,
    pub value: f64,
    pub parts: Vec<WeightedScore>,
}

impl AspectScore {
    /// Combine `parts` with [`ensemble`].
    pub fn from_parts(aspect: Aspect, parts: Vec<WeightedScore>) -> Result<Self, CoreError> {
        let value = ensemble(&parts)?;
        Ok(Self { aspect, value, parts })
    }

    pub fn weight_sum(&self) -> f64 {
        self.parts.iter().map(|p| p.weight).sum()
    }
}

/// Weighted sum of evaluator scores. Weights must form a distribution.
pub fn ensemble(parts: &[WeightedScore]) -> Result<f64, CoreError> {
    if parts.is_empty() {
        return Err(CoreError::NoEvaluators);
    }
    if let Some(p) = parts.iter().find(|p| p.weight.is_nan() || p.weight < 0.0) {
        return Err(CoreError::NegativeWeight(p.weight));
    }
    let total: f64 = parts.iter().map(|p| p.weight).sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(CoreError::UnnormalizedWeights(total));
    }
    let value: f64 = parts.iter().map(|p| p.weight * p.raw_score).sum();

    // keep rounding from nudging the result outside the score range
    let (lo, hi) = parts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.raw_score), hi.max(p.raw_score))
    });
    Ok(value.clamp(lo, hi))
}

/// Scale nonnegative weights to sum to one.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>, CoreError> {
    if raw.is_empty() {
        return Err(CoreError::NoEvaluators);
    }
    if let Some(&w) = raw.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(CoreError::NegativeWeight(w));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(CoreError::DegenerateWeights);
    }
    Ok(raw.iter().map(|w| w / total).collect())
}
