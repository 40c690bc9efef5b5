use std::collections::BTreeMap;
use std::io::BufRead;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::MetaError;
use crate::textproc;
use crate::types::{Aspect, EvalInstance, WeightedScore};

/// One line of an evaluation or scoring input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub prefix: String,
    pub label: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ratings: BTreeMap<Aspect, Vec<i64>>,
}

impl InstanceRecord {
    pub fn instance(&self) -> Result<EvalInstance, MetaError> {
        EvalInstance::new(&self.prefix, &self.label, &self.text)
            .map_err(|source| MetaError::Text { id: self.id.clone(), source })
    }

    /// Validated ratings for `aspect`.
    pub fn ratings_for(&self, aspect: Aspect) -> Result<Vec<u8>, MetaError> {
        let values = self
            .ratings
            .get(&aspect)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| MetaError::MissingRatings { id: self.id.clone(), aspect })?;
        values
            .iter()
            .map(|&v| {
                u8::try_from(v)
                    .ok()
                    .filter(|r| (1..=5).contains(r))
                    .ok_or_else(|| MetaError::InvalidRating { id: self.id.clone(), value: v })
            })
            .collect()
    }

    /// Mean of the validated ratings for `aspect`.
    pub fn mean_rating(&self, aspect: Aspect) -> Result<f64, MetaError> {
        let r = self.ratings_for(aspect)?;
        Ok(r.iter().map(|&v| f64::from(v)).sum::<f64>() / r.len() as f64)
    }

    /// Build the instance after dropping an unterminated final sentence.
    pub fn instance_trimmed(&self) -> Result<EvalInstance, MetaError> {
        let text = textproc::trim_incomplete_last_sentence(&self.text)
            .map_err(|source| MetaError::Text { id: self.id.clone(), source })?;
        EvalInstance::new(&self.prefix, &self.label, text)
            .map_err(|source| MetaError::Text { id: self.id.clone(), source })
    }
}

/// A rated sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSetRecord {
    pub id: String,
    pub instance: EvalInstance,
    pub generator_model: String,
    pub ratings: BTreeMap<Aspect, Vec<u8>>,
    pub mean_rating: BTreeMap<Aspect, f64>,
}

impl EvalSetRecord {
    /// Validate `rec`; every aspect in `required` must carry ratings.
    pub fn from_record(rec: &InstanceRecord, required: &[Aspect]) -> Result<Self, MetaError> {
        let generator_model = rec
            .model
            .clone()
            .filter(|m| !m.trim().is_empty())
            .ok_or_else(|| MetaError::MissingModel { id: rec.id.clone() })?;
        let mut ratings = BTreeMap::new();
        let mut mean_rating = BTreeMap::new();
        for &aspect in rec.ratings.keys() {
            let checked = rec.ratings_for(aspect)?;
            mean_rating.insert(aspect, rec.mean_rating(aspect)?);
            ratings.insert(aspect, checked);
        }
        if let Some(&aspect) = required.iter().find(|a| !ratings.contains_key(a)) {
            return Err(MetaError::MissingRatings { id: rec.id.clone(), aspect });
        }
        Ok(Self {
            id: rec.id.clone(),
            instance: rec.instance()?,
            generator_model,
            ratings,
            mean_rating,
        })
    }

    pub fn mean(&self, aspect: Aspect) -> Option<f64> {
        self.mean_rating.get(&aspect).copied()
    }
}

/// One line of a scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub id: String,
    pub aspect: Aspect,
    pub score: f64,
    pub parts: Vec<WeightedScore>,
}

/// Parse a JSON-lines stream, skipping blank lines and `{"header": ...}`
/// objects.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, MetaError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|source| MetaError::Json { line: i + 1, source })?;
        if value.get("header").is_some() {
            continue;
        }
        out.push(serde_json::from_value(value).map_err(|source| MetaError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

/// Annotation quality control: a submission is discarded when the negative
/// sample was rated above any of the genuine texts.
pub fn should_discard_submission(negative: f64, others: &[f64]) -> bool {
    others.iter().any(|&o| negative > o)
}
