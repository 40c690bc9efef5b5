//! JSON-lines wire protocol between the engine and a model sidecar.
//!
//! ```text
//! sidecar -> {"protocol": "ctrleval-scorer/1", "model": "..."}
//! engine  -> {"id": "7", "op": "infill", "input": "... «MASK» ...", "target": "..."}
//! sidecar -> {"id": "7", "log_prob": -12.5}
//! engine  -> {"id": "8", "op": "label_words", "input": "...", "candidates": ["good", "bad"]}
//! sidecar -> {"id": "8", "probs": [0.31, 0.02]}
//! sidecar -> {"id": "9", "error": {"code": "...", "message": "..."}}
//! ```

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{InfillRequest, LabelWordsRequest, Scorer, ScorerError};

pub const PROTOCOL: &str = "ctrleval-scorer/1";

pub mod codes {
    pub const MALFORMED_REQUEST: &str = "malformed_request";
    pub const INVALID_REQUEST: &str = "invalid_request";
    pub const UNENCODABLE_CANDIDATE: &str = "unencodable_candidate";
    pub const BACKEND_ERROR: &str = "backend_error";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum WireRequest {
    Infill {
        id: String,
        input: String,
        target: String,
    },
    LabelWords {
        id: String,
        input: String,
        candidates: Vec<String>,
    },
}

impl WireRequest {
    pub fn id(&self) -> &str {
        match self {
            WireRequest::Infill { id, .. } | WireRequest::LabelWords { id, .. } => id,
        }
    }

    pub fn infill(id: impl Into<String>, req: &InfillRequest) -> Self {
        WireRequest::Infill {
            id: id.into(),
            input: req.input_pattern.clone(),
            target: req.output_target.clone(),
        }
    }

    pub fn label_words(id: impl Into<String>, req: &LabelWordsRequest) -> Self {
        WireRequest::LabelWords {
            id: id.into(),
            input: req.input_pattern.clone(),
            candidates: req.candidate_words.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

impl WireResponse {
    pub fn log_prob(id: impl Into<String>, v: f64) -> Self {
        Self { id: id.into(), log_prob: Some(v), probs: None, error: None }
    }

    pub fn probs(id: impl Into<String>, v: Vec<f64>) -> Self {
        Self { id: id.into(), log_prob: None, probs: Some(v), error: None }
    }

    pub fn error(id: impl Into<String>, code: &str, message: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            log_prob: None,
            probs: None,
            error: Some(WireError { code: code.to_string(), message: message.into() }),
        }
    }
}

fn error_code(e: &ScorerError) -> &'static str {
    match e {
        ScorerError::InvalidRequest { .. } => codes::INVALID_REQUEST,
        ScorerError::CandidateNotEncodable { .. } => codes::UNENCODABLE_CANDIDATE,
        _ => codes::BACKEND_ERROR,
    }
}

/// Answer one request line with `backend`.
pub fn answer<S: Scorer + ?Sized>(backend: &S, line: &str) -> WireResponse {
    let req: WireRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(String::from))
                .unwrap_or_default();
            return WireResponse::error(id, codes::MALFORMED_REQUEST, e.to_string());
        }
    };
    match req {
        WireRequest::Infill { id, input, target } => {
            let r = InfillRequest::new(id.clone(), input, target);
            match super::score_infill(backend, &r) {
                Ok(v) => WireResponse::log_prob(id, v),
                Err(e) => WireResponse::error(id, error_code(&e), e.to_string()),
            }
        }
        WireRequest::LabelWords { id, input, candidates } => {
            let r = LabelWordsRequest::new(id.clone(), input, candidates);
            match super::score_label_words(backend, &r) {
                Ok(v) => WireResponse::probs(id, v),
                Err(e) => WireResponse::error(id, error_code(&e), e.to_string()),
            }
        }
    }
}

/// Serve `backend` over a line stream until the reader closes. Returns the
/// number of requests answered.
pub fn serve<S, R, W>(backend: &S, reader: R, mut writer: W) -> io::Result<usize>
where
    S: Scorer + ?Sized,
    R: BufRead,
    W: Write,
{
    let hello = Handshake {
        protocol: PROTOCOL.to_string(),
        model: backend.model_name(),
    };
    writeln!(writer, "{}", serde_json::to_string(&hello)?)?;
    writer.flush()?;

    let mut answered = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = answer(backend, &line);
        writeln!(writer, "{}", serde_json::to_string(&resp)?)?;
        writer.flush()?;
        answered += 1;
    }
    Ok(answered)
}
