//! Meta-evaluation against human ratings.

mod agreement;
mod correlation;
mod drift;
mod perturb;
mod records;

pub use agreement::{krippendorff_alpha, units_from_rater_rows, MeasurementLevel};
pub use correlation::{average_ranks, correlate, kendall, pearson, spearman, CorrelationReport};
pub use drift::{
    evaluator_subsample_report, inclusion_probability, model_drift_report, quality_drift_subsets,
    quality_drift_report, subsample_indices, ModelDriftReport, QualityDrift, QualityDriftReport,
    QualitySubset, SkippedSubset, SortKey, SubsampleReport, SubsampleRow, QUALITY_SUBSETS,
};
pub use perturb::{perturb_negative, PerturbStrategy};
pub use records::{
    read_jsonl, should_discard_submission, EvalSetRecord, InstanceRecord, ScoreLine,
};

use thiserror::Error;

use crate::aspects::AspectError;
use crate::textproc::TextError;
use crate::types::Aspect;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("non-finite value")]
    NonFinite,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("need at least {need} records, got {got}")]
    TooFewRecords { need: usize, got: usize },
    #[error("record {id}: rating {value} outside 1..=5")]
    InvalidRating { id: String, value: i64 },
    #[error("record {id}: no {aspect} ratings")]
    MissingRatings { id: String, aspect: Aspect },
    #[error("record {id}: missing generator model")]
    MissingModel { id: String },
    #[error("duplicate sample id {0}")]
    DuplicateId(String),
    #[error("ids without a match: {}", .0.join(", "))]
    MissingIds(Vec<String>),
    #[error("k = {k} exceeds the {n} available evaluators")]
    KTooLarge { k: usize, n: usize },
    #[error("too short to perturb")]
    TooShort,
    #[error("{0}")]
    Invalid(String),
    #[error("record {id}: {source}")]
    Text { id: String, source: TextError },
    #[error(transparent)]
    TextProc(#[from] TextError),
    #[error("record {id}: {source}")]
    Aspect { id: String, source: AspectError },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
