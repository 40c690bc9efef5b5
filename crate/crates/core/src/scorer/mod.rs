//! The scoring contract over a pre-trained text-infilling model.
//!
//! A [`Scorer`] answers two questions about an input pattern containing one
//! [`MASK`]: the log-probability of a target span in the mask slot, and the
//! probability of each of a list of label words in that slot. Label-word
//! probabilities are returned unnormalized.

mod mock;
pub mod protocol;
mod remote;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{mask_count, MASK};

pub use mock::{mock_tokens, MockScorer, DEFAULT_VOCAB, SMOOTHING};
pub use remote::{RemoteOptions, RemoteScorer};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScorerError {
    #[error("invalid request {request_id}: {message}")]
    InvalidRequest { request_id: String, message: String },
    #[error("candidate not encodable in request {request_id}: {word:?}")]
    CandidateNotEncodable { request_id: String, word: String },
    #[error("protocol error [{code}] for request {request_id:?}: {message}")]
    Protocol {
        request_id: Option<String>,
        code: String,
        message: String,
    },
    #[error("transport error for request {request_id:?}: {message}")]
    Transport {
        request_id: Option<String>,
        message: String,
        retriable: bool,
    },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl ScorerError {
    /// Transport failures that may succeed on retry; everything else is fatal.
    pub fn is_retriable(&self) -> bool {
        matches!(self, ScorerError::Transport { retriable: true, .. })
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, ScorerError::Transport { .. })
    }

    pub fn request_id(&self) -> Option<&str> {
        match self {
            ScorerError::InvalidRequest { request_id, .. }
            | ScorerError::CandidateNotEncodable { request_id, .. } => Some(request_id),
            ScorerError::Protocol { request_id, .. } | ScorerError::Transport { request_id, .. } => {
                request_id.as_deref()
            }
            ScorerError::Config(_) => None,
        }
    }

    fn invalid(request_id: &str, message: impl Into<String>) -> Self {
        ScorerError::InvalidRequest {
            request_id: request_id.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfillRequest {
    pub request_id: String,
    pub input_pattern: String,
    pub output_target: String,
}

impl InfillRequest {
    pub fn new(
        request_id: impl Into<String>,
        input_pattern: impl Into<String>,
        output_target: impl Into<String>,
    ) -> Self {
        Self {
            request_id: request_id.into(),
            input_pattern: input_pattern.into(),
            output_target: output_target.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        check_mask(&self.request_id, &self.input_pattern)?;
        if self.output_target.trim().is_empty() {
            return Err(ScorerError::invalid(&self.request_id, "empty output target"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelWordsRequest {
    pub request_id: String,
    pub input_pattern: String,
    pub candidate_words: Vec<String>,
}

impl LabelWordsRequest {
    pub fn new(
        request_id: impl Into<String>,
        input_pattern: impl Into<String>,
        candidate_words: Vec<String>,
    ) -> Self {
        Self {
            request_id: request_id.into(),
            input_pattern: input_pattern.into(),
            candidate_words,
        }
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        check_mask(&self.request_id, &self.input_pattern)?;
        if self.candidate_words.len() < 2 {
            return Err(ScorerError::invalid(
                &self.request_id,
                "at least two candidate words are required",
            ));
        }
        for (i, w) in self.candidate_words.iter().enumerate() {
            if self.candidate_words[..i].contains(w) {
                return Err(ScorerError::invalid(
                    &self.request_id,
                    format!("duplicate candidate {w:?}"),
                ));
            }
        }
        Ok(())
    }
}

fn check_mask(request_id: &str, pattern: &str) -> Result<(), ScorerError> {
    match mask_count(pattern) {
        1 => Ok(()),
        n => Err(ScorerError::invalid(
            request_id,
            format!("input pattern must contain {MASK} exactly once, found {n}"),
        )),
    }
}

/// A text-infilling model. Implementations must be deterministic: identical
/// requests yield identical answers.
pub trait Scorer: Send + Sync {
    /// Identifies the model in reports.
    fn model_name(&self) -> String;

    /// `log P(target | input)`, summed over target tokens.
    fn infill_log_prob(&self, req: &InfillRequest) -> Result<f64, ScorerError>;

    /// `P(word | input)` for each candidate, in order, not normalized.
    fn label_word_probs(&self, req: &LabelWordsRequest) -> Result<Vec<f64>, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn model_name(&self) -> String {
        (**self).model_name()
    }
    fn infill_log_prob(&self, req: &InfillRequest) -> Result<f64, ScorerError> {
        (**self).infill_log_prob(req)
    }
    fn label_word_probs(&self, req: &LabelWordsRequest) -> Result<Vec<f64>, ScorerError> {
        (**self).label_word_probs(req)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn model_name(&self) -> String {
        (**self).model_name()
    }
    fn infill_log_prob(&self, req: &InfillRequest) -> Result<f64, ScorerError> {
        (**self).infill_log_prob(req)
    }
    fn label_word_probs(&self, req: &LabelWordsRequest) -> Result<Vec<f64>, ScorerError> {
        (**self).label_word_probs(req)
    }
}

/// Validate the request, query the backend and check the answer's range.
pub fn score_infill<S: Scorer + ?Sized>(backend: &S, req: &InfillRequest) -> Result<f64, ScorerError> {
    req.validate()?;
    let lp = backend.infill_log_prob(req)?;
    if lp.is_nan() || lp > 0.0 || lp.is_infinite() {
        return Err(ScorerError::Protocol {
            request_id: Some(req.request_id.clone()),
            code: "out_of_range".into(),
            message: format!("log_prob {lp} is not a finite value <= 0"),
        });
    }
    Ok(lp)
}

/// Validate the request, query the backend and check every probability is in (0, 1].
pub fn score_label_words<S: Scorer + ?Sized>(
    backend: &S,
    req: &LabelWordsRequest,
) -> Result<Vec<f64>, ScorerError> {
    req.validate()?;
    let probs = backend.label_word_probs(req)?;
    let violation = |message: String| ScorerError::Protocol {
        request_id: Some(req.request_id.clone()),
        code: "out_of_range".into(),
        message,
    };
    if probs.len() != req.candidate_words.len() {
        return Err(violation(format!(
            "{} probabilities for {} candidates",
            probs.len(),
            req.candidate_words.len()
        )));
    }
    if let Some(p) = probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(violation(format!("probability {p} outside (0, 1]")));
    }
    Ok(probs)
}

/// Where scores come from, as written on the command line.
///
/// * `mock:<seed>` or `mock:<seed>:<vocab file>`
/// * `remote:<host>:<port>` (also `remote:tcp://<host>:<port>`)
/// * `remote:stdio:<program> [args...]`
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Mock { seed: u64, vocab: Option<PathBuf> },
    Tcp { addr: String },
    Stdio { program: String, args: Vec<String> },
}

impl FromStr for BackendSpec {
    type Err = ScorerError;

    fn from_str(s: &str) -> Result<Self, ScorerError> {
        let bad = |m: &str| ScorerError::Config(format!("{m}: {s:?}"));
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("missing backend kind"))?;
        match kind {
            "mock" => {
                let (seed, vocab) = match rest.split_once(':') {
                    Some((seed, path)) => (seed, Some(PathBuf::from(path))),
                    None => (rest, None),
                };
                let seed = seed.parse().map_err(|_| bad("mock seed must be an integer"))?;
                Ok(BackendSpec::Mock { seed, vocab })
            }
            "remote" => {
                if let Some(cmd) = rest.strip_prefix("stdio:") {
                    let mut parts = cmd.split_whitespace().map(String::from);
                    let program = parts.next().ok_or_else(|| bad("missing program"))?;
                    Ok(BackendSpec::Stdio {
                        program,
                        args: parts.collect(),
                    })
                } else {
                    let addr = rest.strip_prefix("tcp://").unwrap_or(rest);
                    if !addr.contains(':') {
                        return Err(bad("remote endpoint must be host:port"));
                    }
                    Ok(BackendSpec::Tcp { addr: addr.to_string() })
                }
            }
            _ => Err(bad("unknown backend kind")),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Mock { seed, vocab: None } => write!(f, "mock:{seed}"),
            BackendSpec::Mock { seed, vocab: Some(p) } => write!(f, "mock:{seed}:{}", p.display()),
            BackendSpec::Tcp { addr } => write!(f, "remote:{addr}"),
            BackendSpec::Stdio { program, args } => {
                write!(f, "remote:stdio:{program}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
        }
    }
}

impl BackendSpec {
    pub fn connect(&self, opts: RemoteOptions) -> Result<Arc<dyn Scorer>, ScorerError> {
        Ok(match self {
            BackendSpec::Mock { seed, vocab: None } => Arc::new(MockScorer::with_default_vocab(*seed)),
            BackendSpec::Mock { seed, vocab: Some(path) } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    ScorerError::Config(format!("reading vocab {}: {e}", path.display()))
                })?;
                Arc::new(MockScorer::new(*seed, text.split_whitespace())?)
            }
            BackendSpec::Tcp { addr } => Arc::new(RemoteScorer::connect_tcp(addr, opts)?),
            BackendSpec::Stdio { program, args } => {
                Arc::new(RemoteScorer::spawn(program, args, opts)?)
            }
        })
    }
}
