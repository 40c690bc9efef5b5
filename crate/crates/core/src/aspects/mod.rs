//! Pattern evaluators and scores for the three evaluation aspects.
//!
//! * Coherence masks each sentence in turn and scores its log-probability
//!   given the rest, weighted by normalized sentence specificity.
//! * Consistency scores the continuation given the prefix and the prefix
//!   given the continuation, weighted the same way over those two units.
//! * Attribute relevance wraps the text in prompts, reads off label-word
//!   probabilities in the mask slot, and weights each evaluator by the total
//!   probability mass its label words receive.

mod catalog;

use serde::Serialize;
use thiserror::Error;

pub use catalog::{
    load_catalog, AspectCatalog, CatalogError, Placement, PromptTemplate, Verbalizer, MASK_SLOT,
    TEXT_SLOT,
};

use crate::corpus_stats::{IwfTable, StatsError};
use crate::exec::Exec;
use crate::scorer::{score_infill, score_label_words, InfillRequest, LabelWordsRequest, Scorer, ScorerError};
use crate::textproc::TextError;
use crate::types::{
    normalize_weights, Aspect, AspectScore, CoreError, EvalInstance, OutputTarget, PatternEvaluator,
    WeightedScore, MASK,
};

#[derive(Debug, Error)]
pub enum AspectError {
    #[error("evaluator {evaluator_id}: {source}")]
    Scorer {
        evaluator_id: String,
        #[source]
        source: ScorerError,
    },
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("label {label:?} is not in the catalog's attribute set")]
    UnknownLabel { label: String },
    #[error("{0} needs an IWF table")]
    MissingIwf(Aspect),
    #[error("attribute relevance needs a catalog")]
    MissingCatalog,
}

impl AspectError {
    pub fn scorer_error(&self) -> Option<&ScorerError> {
        match self {
            AspectError::Scorer { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// One evaluator per sentence: that sentence masked out of the text and used
/// as the target. Separators between sentences are kept as they were.
pub fn coherence_patterns(instance: &EvalInstance) -> Vec<PatternEvaluator> {
    let text = instance.generated_text();
    let sentences = instance.sentences();
    let (first, last) = (sentences[0].start, sentences[sentences.len() - 1].end);
    sentences
        .iter()
        .map(|s| {
            let input = format!("{}{MASK}{}", &text[first..s.start], &text[s.end..last]);
            PatternEvaluator::new(format!("coh-{}", s.index), input, OutputTarget::Text(s.text.clone()))
                .expect("one mask and a non-empty sentence")
        })
        .collect()
}

/// Prefix-to-continuation and continuation-to-prefix evaluators, in that order.
pub fn consistency_patterns(instance: &EvalInstance) -> [PatternEvaluator; 2] {
    let (x, rest) = (instance.prefix(), instance.continuation());
    [
        PatternEvaluator::new("cons-x2y", format!("{x} {MASK}"), OutputTarget::Text(rest.into())),
        PatternEvaluator::new("cons-y2x", format!("{MASK} {rest}"), OutputTarget::Text(x.into())),
    ]
    .map(|p| p.expect("one mask and non-empty parts"))
}

/// Rendered evaluators, each paired with its verbalizer.
pub type AttributePatterns<'c> = Vec<(PatternEvaluator, &'c Verbalizer)>;

/// One evaluator per (prompt, verbalizer) pair. The label must belong to the
/// catalog; its position in the attribute set is returned alongside.
pub fn attribute_patterns<'c>(
    catalog: &'c AspectCatalog,
    instance: &EvalInstance,
) -> Result<(usize, AttributePatterns<'c>), AspectError> {
    let label = catalog
        .labels()
        .position(instance.label())
        .ok_or_else(|| AspectError::UnknownLabel { label: instance.label().to_string() })?;
    let text = instance.trimmed_text();
    let labels = catalog.labels();
    let patterns = catalog
        .pairs()
        .map(|(p, v)| {
            let words = labels
                .labels()
                .iter()
                .cloned()
                .zip(v.words(labels))
                .collect();
            let e = PatternEvaluator::new(
                format!("{}/{}", p.id, v.id),
                p.render(text),
                OutputTarget::LabelWords(words),
            )
            .expect("validated template renders one mask");
            (e, v)
        })
        .collect();
    Ok((label, patterns))
}

fn infill_scores<B: Scorer + ?Sized>(
    patterns: &[PatternEvaluator],
    backend: &B,
    exec: Exec,
) -> Result<Vec<f64>, AspectError> {
    exec.try_map(patterns, |_, p| {
        let target = p.target_text().expect("span evaluator");
        let req = InfillRequest::new(p.id.clone(), p.input_pattern.clone(), target);
        score_infill(backend, &req).map_err(|source| AspectError::Scorer {
            evaluator_id: p.id.clone(),
            source,
        })
    })
}

fn assemble(
    aspect: Aspect,
    patterns: &[PatternEvaluator],
    weights: &[f64],
    scores: &[f64],
) -> Result<AspectScore, AspectError> {
    let parts = patterns
        .iter()
        .zip(weights.iter().zip(scores))
        .map(|(p, (&w, &s))| WeightedScore::new(p.id.clone(), s, w))
        .collect();
    Ok(AspectScore::from_parts(aspect, parts)?)
}

/// Sum over sentences of specificity weight times the sentence's infill
/// log-probability given the other sentences.
pub fn score_coherence<B: Scorer + ?Sized>(
    instance: &EvalInstance,
    iwf: &IwfTable,
    backend: &B,
    exec: Exec,
) -> Result<AspectScore, AspectError> {
    let patterns = coherence_patterns(instance);
    let units: Vec<&str> = instance.sentences().iter().map(|s| s.text.as_str()).collect();
    let weights = iwf.nisf_weights(&units)?;
    let scores = infill_scores(&patterns, backend, exec)?;
    assemble(Aspect::Coherence, &patterns, &weights, &scores)
}

/// Both directions between prefix and continuation, weighted by specificity
/// normalized over exactly those two texts.
pub fn score_consistency<B: Scorer + ?Sized>(
    instance: &EvalInstance,
    iwf: &IwfTable,
    backend: &B,
    exec: Exec,
) -> Result<AspectScore, AspectError> {
    let patterns = consistency_patterns(instance);
    // x2y predicts the continuation, y2x predicts the prefix
    let weights = iwf.nisf_weights(&[instance.continuation(), instance.prefix()])?;
    let scores = infill_scores(&patterns, backend, exec)?;
    assemble(Aspect::Consistency, &patterns, &weights, &scores)
}

/// Label-word probabilities of every attribute evaluator for one text.
///
/// Scores for any label, or any subset of evaluators, follow from these
/// without further backend calls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeProbe {
    pub evaluator_ids: Vec<String>,
    /// `probs[j][a]`: probability of label `a`'s word under evaluator `j`.
    pub probs: Vec<Vec<f64>>,
}

impl AttributeProbe {
    pub fn len(&self) -> usize {
        self.evaluator_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluator_ids.is_empty()
    }

    /// Attribute relevance of label index `label` over all evaluators.
    pub fn score(&self, label: usize) -> Result<AspectScore, AspectError> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.score_subset(label, &all)
    }

    /// Attribute relevance over the evaluators at `indices`, combined in the
    /// order given.
    ///
    /// Each evaluator scores `p(label) / sum_a p(a)` and is weighted by
    /// `sum_a p(a)`, normalized over the chosen evaluators.
    pub fn score_subset(&self, label: usize, indices: &[usize]) -> Result<AspectScore, AspectError> {
        let mass: Vec<f64> = indices.iter().map(|&j| self.probs[j].iter().sum()).collect();
        let weights = normalize_weights(&mass)?;
        let parts = indices
            .iter()
            .zip(mass.iter().zip(&weights))
            .map(|(&j, (&m, &w))| {
                WeightedScore::new(self.evaluator_ids[j].clone(), self.probs[j][label] / m, w)
            })
            .collect();
        Ok(AspectScore::from_parts(Aspect::AttributeRelevance, parts)?)
    }
}

/// Query the backend for every evaluator of `catalog` on `instance`.
/// Returns the instance's label index and the probe.
pub fn probe_attribute<B: Scorer + ?Sized>(
    catalog: &AspectCatalog,
    instance: &EvalInstance,
    backend: &B,
    exec: Exec,
) -> Result<(usize, AttributeProbe), AspectError> {
    let (label, patterns) = attribute_patterns(catalog, instance)?;
    let probs = exec.try_map(&patterns, |_, (p, v)| {
        let req = LabelWordsRequest::new(p.id.clone(), p.input_pattern.clone(), v.words(catalog.labels()));
        score_label_words(backend, &req).map_err(|source| AspectError::Scorer {
            evaluator_id: p.id.clone(),
            source,
        })
    })?;
    let evaluator_ids = patterns.into_iter().map(|(p, _)| p.id).collect();
    Ok((label, AttributeProbe { evaluator_ids, probs }))
}

/// Probability-mass-weighted share of the true label's word across all
/// prompt/verbalizer evaluators.
pub fn score_attribute_relevance<B: Scorer + ?Sized>(
    catalog: &AspectCatalog,
    instance: &EvalInstance,
    backend: &B,
    exec: Exec,
) -> Result<AspectScore, AspectError> {
    let (label, probe) = probe_attribute(catalog, instance, backend, exec)?;
    probe.score(label)
}

/// Tables and catalogs an aspect may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct AspectResources<'a> {
    pub iwf: Option<&'a IwfTable>,
    pub catalog: Option<&'a AspectCatalog>,
}

pub fn score_aspect<B: Scorer + ?Sized>(
    aspect: Aspect,
    instance: &EvalInstance,
    resources: AspectResources<'_>,
    backend: &B,
    exec: Exec,
) -> Result<AspectScore, AspectError> {
    match aspect {
        Aspect::Coherence | Aspect::Consistency => {
            let iwf = resources.iwf.ok_or(AspectError::MissingIwf(aspect))?;
            if aspect == Aspect::Coherence {
                score_coherence(instance, iwf, backend, exec)
            } else {
                score_consistency(instance, iwf, backend, exec)
            }
        }
        Aspect::AttributeRelevance => {
            let catalog = resources.catalog.ok_or(AspectError::MissingCatalog)?;
            score_attribute_relevance(catalog, instance, backend, exec)
        }
    }
}
