//! Scoring attribute-controlled generations without human-written references.
//!
//! Each evaluation aspect (coherence, consistency, attribute relevance) is
//! cast as a set of text-infilling pattern evaluators scored by a pre-trained
//! model behind the [`scorer::Scorer`] trait, then combined with
//! instance-dependent weights. [`metaeval`] measures how well the resulting
//! scores track human ratings.

pub mod aspects;
pub mod cli;
pub mod corpus_stats;
pub mod exec;
pub mod metaeval;
pub mod scorer;
pub mod textproc;
pub mod types;

pub use exec::Exec;
pub use types::{
    ensemble, normalize_weights, Aspect, AspectScore, AttributeSet, CoreError, EvalInstance,
    OutputTarget, PatternEvaluator, WeightedScore, MASK,
};
