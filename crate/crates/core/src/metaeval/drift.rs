//! Model drift, quality drift and evaluator subsampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::correlation::{correlate, pearson, CorrelationReport};
use super::records::EvalSetRecord;
use super::MetaError;
use crate::aspects::{probe_attribute, AspectCatalog};
use crate::exec::Exec;
use crate::scorer::Scorer;
use crate::types::Aspect;

fn mean_var(v: &[f64]) -> (f64, f64) {
    if v.windows(2).all(|w| w[0] == w[1]) {
        return (v[0], 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

/// Pair every record with its metric score and mean human rating, in
/// record order.
fn aligned(
    records: &[EvalSetRecord],
    scores: &HashMap<String, f64>,
    aspect: Aspect,
) -> Result<Vec<(f64, f64)>, MetaError> {
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !scores.contains_key(&r.id))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(MetaError::MissingIds(missing));
    }
    let mut seen = HashSet::new();
    records
        .iter()
        .map(|r| {
            if !seen.insert(r.id.as_str()) {
                return Err(MetaError::DuplicateId(r.id.clone()));
            }
            let human = r
                .mean(aspect)
                .ok_or_else(|| MetaError::MissingRatings { id: r.id.clone(), aspect })?;
            Ok((scores[&r.id], human))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSubset {
    pub name: String,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDriftReport {
    pub aspect: Aspect,
    pub per_model: BTreeMap<String, CorrelationReport>,
    pub skipped: Vec<SkippedSubset>,
    /// Mean and population variance of the per-model Pearson values.
    pub pearson_mean: Option<f64>,
    pub pearson_variance: Option<f64>,
}

/// One correlation report per generator model.
pub fn model_drift_report(
    records: &[EvalSetRecord],
    scores: &HashMap<String, f64>,
    aspect: Aspect,
) -> Result<ModelDriftReport, MetaError> {
    let pairs = aligned(records, scores, aspect)?;
    let mut groups: BTreeMap<&str, Vec<(&str, f64, f64)>> = BTreeMap::new();
    for (r, (s, h)) in records.iter().zip(pairs) {
        groups.entry(r.generator_model.as_str()).or_default().push((r.id.as_str(), s, h));
    }

    let mut per_model = BTreeMap::new();
    let mut skipped = Vec::new();
    for (model, mut rows) in groups {
        // fixed order so input order cannot change the sums
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.2).collect();
        match correlate(aspect, &xs, &ys) {
            Ok(rep) => {
                per_model.insert(model.to_string(), rep);
            }
            Err(e) => {
                log::warn!("skipping model {model} ({} samples): {e}", rows.len());
                skipped.push(SkippedSubset { name: model.to_string(), n: rows.len(), reason: e.to_string() });
            }
        }
    }
    let rs: Vec<f64> = per_model.values().map(|r| r.pearson_r).collect();
    let (pearson_mean, pearson_variance) = if rs.is_empty() {
        (None, None)
    } else {
        let (m, v) = mean_var(&rs);
        (Some(m), Some(v))
    };
    Ok(ModelDriftReport { aspect, per_model, skipped, pearson_mean, pearson_variance })
}

pub const QUALITY_SUBSETS: usize = 4;

/// Probability that a record from source quartile `i` enters biased subset `j`.
pub fn inclusion_probability(i: usize, j: usize) -> f64 {
    1.0 / (i.abs_diff(j) + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityDrift {
    pub seed: u64,
    /// Ids per quartile, lowest scores first.
    pub sources: Vec<Vec<String>>,
    pub subsets: Vec<Vec<String>>,
}

/// Split `(id, score)` items into score quartiles and draw the four biased
/// subsets. Ties are broken by id.
pub fn quality_drift_subsets(items: &[(String, f64)], seed: u64) -> Result<QualityDrift, MetaError> {
    const MIN: usize = 8;
    if items.len() < MIN {
        return Err(MetaError::TooFewRecords { need: MIN, got: items.len() });
    }
    if items.iter().any(|(_, s)| !s.is_finite()) {
        return Err(MetaError::NonFinite);
    }
    let mut sorted: Vec<&(String, f64)> = items.iter().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let n = sorted.len();
    let source_of = |rank: usize| rank * QUALITY_SUBSETS / n;

    let mut sources = vec![Vec::new(); QUALITY_SUBSETS];
    for (rank, (id, _)) in sorted.iter().map(|p| (&p.0, p.1)).enumerate() {
        sources[source_of(rank)].push(id.clone());
    }
    let subsets = (0..QUALITY_SUBSETS)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            sorted
                .iter()
                .enumerate()
                .filter(|&(rank, _)| rng.random::<f64>() < inclusion_probability(source_of(rank), j))
                .map(|(_, p)| p.0.clone())
                .collect()
        })
        .collect();
    Ok(QualityDrift { seed, sources, subsets })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    #[default]
    Metric,
    Human,
}

impl FromStr for SortKey {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "metric" => Ok(Self::Metric),
            "human" => Ok(Self::Human),
            other => Err(MetaError::Invalid(format!("unknown sort key `{other}`"))),
        }
    }
}

impl fmt::Display for SortKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Metric => "metric",
            Self::Human => "human",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySubset {
    pub index: usize,
    pub ids: Vec<String>,
    pub mean_human: f64,
    pub mean_metric: f64,
    pub correlation: Option<CorrelationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityDriftReport {
    pub aspect: Aspect,
    pub seed: u64,
    pub sort_by: SortKey,
    pub sources: Vec<Vec<String>>,
    pub subsets: Vec<QualitySubset>,
}

/// Draw the biased subsets and correlate metric with human ratings inside
/// each.
pub fn quality_drift_report(
    records: &[EvalSetRecord],
    scores: &HashMap<String, f64>,
    aspect: Aspect,
    sort_by: SortKey,
    seed: u64,
) -> Result<QualityDriftReport, MetaError> {
    let pairs = aligned(records, scores, aspect)?;
    let by_id: HashMap<&str, (f64, f64)> = records.iter().map(|r| r.id.as_str()).zip(pairs.iter().copied()).collect();
    let items: Vec<(String, f64)> = records
        .iter()
        .zip(&pairs)
        .map(|(r, &(s, h))| (r.id.clone(), if sort_by == SortKey::Metric { s } else { h }))
        .collect();
    let drift = quality_drift_subsets(&items, seed)?;

    let subsets = drift
        .subsets
        .into_iter()
        .enumerate()
        .map(|(index, ids)| {
            let xs: Vec<f64> = ids.iter().map(|id| by_id[id.as_str()].0).collect();
            let ys: Vec<f64> = ids.iter().map(|id| by_id[id.as_str()].1).collect();
            let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            let (correlation, skipped) = match correlate(aspect, &xs, &ys) {
                Ok(r) => (Some(r), None),
                Err(e) => {
                    log::warn!("quality subset {index} ({} samples): {e}", ids.len());
                    (None, Some(e.to_string()))
                }
            };
            QualitySubset { index, mean_human: avg(&ys), mean_metric: avg(&xs), ids, correlation, skipped }
        })
        .collect();
    Ok(QualityDriftReport { aspect, seed, sort_by, sources: drift.sources, subsets })
}

/// Sorted `k`-subset of `0..n` for trial `trial`. Each (k, trial) pair reads
/// its own stream of the seeded generator.
pub fn subsample_indices(n: usize, k: usize, seed: u64, trial: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 32) | trial as u64);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleRow {
    pub k: usize,
    pub mean_pearson: f64,
    /// Population standard deviation across trials.
    pub std_pearson: f64,
    pub pearsons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleReport {
    pub seed: u64,
    pub trials: usize,
    pub n_evaluators: usize,
    pub n_samples: usize,
    pub full_pearson: f64,
    pub rows: Vec<SubsampleRow>,
}

/// Re-score attribute relevance with `k` randomly chosen evaluators and
/// report how the Pearson correlation with human ratings spreads.
pub fn evaluator_subsample_report<B: Scorer + ?Sized>(
    catalog: &AspectCatalog,
    records: &[EvalSetRecord],
    backend: &B,
    k_values: &[usize],
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<SubsampleReport, MetaError> {
    if trials == 0 {
        return Err(MetaError::Invalid("trials must be at least 1".into()));
    }
    let n_ar = catalog.evaluator_count();
    if let Some(&k) = k_values.iter().find(|&&k| k > n_ar) {
        return Err(MetaError::KTooLarge { k, n: n_ar });
    }
    if k_values.contains(&0) {
        return Err(MetaError::Invalid("k must be at least 1".into()));
    }
    let human: Vec<f64> = records
        .iter()
        .map(|r| {
            r.mean(Aspect::AttributeRelevance).ok_or_else(|| MetaError::MissingRatings {
                id: r.id.clone(),
                aspect: Aspect::AttributeRelevance,
            })
        })
        .collect::<Result<_, _>>()?;
    let probes = exec.try_map(records, |_, r| {
        probe_attribute(catalog, &r.instance, backend, Exec::Sequential)
            .map_err(|source| MetaError::Aspect { id: r.id.clone(), source })
    })?;

    let score_with = |idx: &[usize]| -> Result<f64, MetaError> {
        let metric = probes
            .iter()
            .zip(records)
            .map(|((label, probe), r)| {
                probe
                    .score_subset(*label, idx)
                    .map(|s| s.value)
                    .map_err(|source| MetaError::Aspect { id: r.id.clone(), source })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        pearson(&metric, &human)
    };
    let all: Vec<usize> = (0..n_ar).collect();
    let full_pearson = score_with(&all)?;

    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let pearsons = exec
            .map_range(trials, |t| score_with(&subsample_indices(n_ar, k, seed, t)))
            .into_iter()
            .collect::<Result<Vec<f64>, _>>()?;
        let (mean_pearson, var) = mean_var(&pearsons);
        rows.push(SubsampleRow { k, mean_pearson, std_pearson: var.sqrt(), pearsons });
    }
    Ok(SubsampleReport { seed, trials, n_evaluators: n_ar, n_samples: records.len(), full_pearson, rows })
}
