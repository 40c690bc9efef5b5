use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{AttributeSet, CoreError, MASK};

const SENTIMENT_JSON: &str = include_str!("../../data/catalogs/sentiment.json");
const TOPIC_JSON: &str = include_str!("../../data/catalogs/topic.json");

/// Slot in a template replaced by the generated text.
pub const TEXT_SLOT: &str = "{text}";
/// Slot in a template replaced by the mask placeholder.
pub const MASK_SLOT: &str = "{mask}";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("catalog has no prompts")]
    NoPrompts,
    #[error("catalog has no verbalizers")]
    NoVerbalizers,
    #[error("duplicate prompt id {0:?}")]
    DuplicatePrompt(String),
    #[error("duplicate verbalizer id {0:?}")]
    DuplicateVerbalizer(String),
    #[error("prompt {id:?} has {count} {slot} slots, expected 1")]
    SlotCount { id: String, slot: &'static str, count: usize },
    #[error("prompt {id:?} placement does not match where its text slot sits")]
    Placement { id: String },
    #[error("prompt {id:?} contains a literal mask placeholder")]
    LiteralMask { id: String },
    #[error("verbalizer {verbalizer:?} has no word for label {label:?}")]
    MissingLabel { verbalizer: String, label: String },
    #[error("verbalizer {verbalizer:?} maps unknown label {label:?}")]
    UnknownLabel { verbalizer: String, label: String },
    #[error("verbalizer {verbalizer:?} uses word {word:?} more than once")]
    DuplicateWord { verbalizer: String, word: String },
    #[error("invalid attribute labels: {0}")]
    Labels(#[from] CoreError),
    #[error("unknown built-in catalog {0:?}")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// `Y` then the prompt.
    TextFirst,
    /// The prompt then `Y`.
    PromptFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub template: String,
    pub placement: Placement,
}

impl PromptTemplate {
    fn validate(&self) -> Result<(), CatalogError> {
        for slot in [TEXT_SLOT, MASK_SLOT] {
            let count = self.template.matches(slot).count();
            if count != 1 {
                return Err(CatalogError::SlotCount { id: self.id.clone(), slot, count });
            }
        }
        if self.template.contains(MASK) {
            return Err(CatalogError::LiteralMask { id: self.id.clone() });
        }
        let ok = match self.placement {
            Placement::TextFirst => self.template.starts_with(TEXT_SLOT),
            Placement::PromptFirst => self.template.ends_with(TEXT_SLOT),
        };
        if !ok {
            return Err(CatalogError::Placement { id: self.id.clone() });
        }
        Ok(())
    }

    /// Substitute `text` and the mask placeholder into the template.
    pub fn render(&self, text: &str) -> String {
        let (before, after) = self
            .template
            .split_once(TEXT_SLOT)
            .expect("validated template has a text slot");
        let mut out = before.replace(MASK_SLOT, MASK);
        out.push_str(text);
        out.push_str(&after.replace(MASK_SLOT, MASK));
        out
    }
}

/// Maps every attribute label to one label word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verbalizer {
    pub id: String,
    pub mapping: BTreeMap<String, String>,
}

impl Verbalizer {
    pub fn word(&self, label: &str) -> Option<&str> {
        self.mapping.get(label).map(String::as_str)
    }

    /// Label words in the order of `labels`.
    pub fn words(&self, labels: &AttributeSet) -> Vec<String> {
        labels
            .labels()
            .iter()
            .map(|l| self.mapping[l].clone())
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct RawCatalog {
    task: String,
    #[serde(default)]
    labels: Option<Vec<String>>,
    prompts: Vec<PromptTemplate>,
    verbalizers: Vec<Verbalizer>,
}

/// Prompts and verbalizers for one task. Every (prompt, verbalizer) pair is
/// one attribute-relevance evaluator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AspectCatalog {
    task: String,
    labels: AttributeSet,
    prompts: Vec<PromptTemplate>,
    verbalizers: Vec<Verbalizer>,
}

impl AspectCatalog {
    pub fn from_json_str(s: &str) -> Result<Self, CatalogError> {
        let raw: RawCatalog = serde_json::from_str(s)?;
        Self::new(raw.task, raw.labels, raw.prompts, raw.verbalizers)
    }

    /// Validate and assemble a catalog. Without explicit `labels` the label
    /// set is the sorted keys of the first verbalizer.
    pub fn new(
        task: String,
        labels: Option<Vec<String>>,
        prompts: Vec<PromptTemplate>,
        verbalizers: Vec<Verbalizer>,
    ) -> Result<Self, CatalogError> {
        if prompts.is_empty() {
            return Err(CatalogError::NoPrompts);
        }
        if verbalizers.is_empty() {
            return Err(CatalogError::NoVerbalizers);
        }
        let mut ids = HashSet::new();
        for p in &prompts {
            if !ids.insert(p.id.as_str()) {
                return Err(CatalogError::DuplicatePrompt(p.id.clone()));
            }
            p.validate()?;
        }

        let labels = AttributeSet::new(
            labels.unwrap_or_else(|| verbalizers[0].mapping.keys().cloned().collect()),
        )?;
        let mut ids = HashSet::new();
        for v in &verbalizers {
            if !ids.insert(v.id.as_str()) {
                return Err(CatalogError::DuplicateVerbalizer(v.id.clone()));
            }
            for l in labels.labels() {
                if v.word(l).is_none_or(|w| w.trim().is_empty()) {
                    return Err(CatalogError::MissingLabel {
                        verbalizer: v.id.clone(),
                        label: l.clone(),
                    });
                }
            }
            if let Some(l) = v.mapping.keys().find(|l| !labels.labels().contains(l)) {
                return Err(CatalogError::UnknownLabel {
                    verbalizer: v.id.clone(),
                    label: l.clone(),
                });
            }
            let mut words = HashSet::new();
            for w in v.mapping.values() {
                if !words.insert(w) {
                    return Err(CatalogError::DuplicateWord {
                        verbalizer: v.id.clone(),
                        word: w.clone(),
                    });
                }
            }
        }
        Ok(Self { task, labels, prompts, verbalizers })
    }

    /// A catalog shipped with the crate: `sentiment` or `topic`.
    pub fn builtin(name: &str) -> Result<Self, CatalogError> {
        match name {
            "sentiment" => Self::from_json_str(SENTIMENT_JSON),
            "topic" => Self::from_json_str(TOPIC_JSON),
            other => Err(CatalogError::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn labels(&self) -> &AttributeSet {
        &self.labels
    }

    pub fn prompts(&self) -> &[PromptTemplate] {
        &self.prompts
    }

    pub fn verbalizers(&self) -> &[Verbalizer] {
        &self.verbalizers
    }

    /// `|prompts| * |verbalizers|`.
    pub fn evaluator_count(&self) -> usize {
        self.prompts.len() * self.verbalizers.len()
    }

    /// Every (prompt, verbalizer) pair, prompt-major.
    pub fn pairs(&self) -> impl Iterator<Item = (&PromptTemplate, &Verbalizer)> {
        self.prompts
            .iter()
            .flat_map(move |p| self.verbalizers.iter().map(move |v| (p, v)))
    }
}

/// Read a catalog file. `builtin:sentiment` and `builtin:topic` name the
/// shipped catalogs.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<AspectCatalog, CatalogError> {
    let path = path.as_ref();
    if let Some(name) = path.to_str().and_then(|p| p.strip_prefix("builtin:")) {
        return AspectCatalog::builtin(name);
    }
    AspectCatalog::from_json_str(&std::fs::read_to_string(path)?)
}
