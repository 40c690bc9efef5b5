//! Krippendorff's alpha over a units-by-values layout.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementLevel {
    Nominal,
    Ordinal,
    #[default]
    Interval,
}

impl FromStr for MeasurementLevel {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nominal" => Ok(Self::Nominal),
            "ordinal" => Ok(Self::Ordinal),
            "interval" => Ok(Self::Interval),
            other => Err(MetaError::Invalid(format!("unknown measurement level `{other}`"))),
        }
    }
}

/// Each inner vector holds the ratings one item received (missing ratings
/// simply absent). Items with fewer than two ratings are not pairable and
/// are ignored.
pub fn krippendorff_alpha(units: &[Vec<f64>], level: MeasurementLevel) -> Result<f64, MetaError> {
    if units.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MetaError::NonFinite);
    }
    let pairable: Vec<&Vec<f64>> = units.iter().filter(|u| u.len() >= 2).collect();
    if pairable.is_empty() {
        return Err(MetaError::Degenerate("no item has two or more ratings".into()));
    }

    let mut values: Vec<f64> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let v = values.len();
    if v < 2 {
        return Err(MetaError::Degenerate("all ratings are identical".into()));
    }
    let index = |x: f64| values.binary_search_by(|p| p.total_cmp(&x)).unwrap();

    // coincidence matrix
    let mut o = vec![vec![0.0f64; v]; v];
    let mut counts = vec![0usize; v];
    for u in &pairable {
        counts.iter_mut().for_each(|c| *c = 0);
        for &x in u.iter() {
            counts[index(x)] += 1;
        }
        let w = 1.0 / (u.len() - 1) as f64;
        for c in 0..v {
            if counts[c] == 0 {
                continue;
            }
            for k in 0..v {
                let pairs = if c == k {
                    counts[c] * (counts[c] - 1)
                } else {
                    counts[c] * counts[k]
                };
                o[c][k] += pairs as f64 * w;
            }
        }
    }
    let marg: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marg.iter().sum();

    let delta2 = |c: usize, k: usize| -> f64 {
        match level {
            MeasurementLevel::Nominal => (c != k) as u8 as f64,
            MeasurementLevel::Interval => (values[c] - values[k]).powi(2),
            MeasurementLevel::Ordinal => {
                let (lo, hi) = if c <= k { (c, k) } else { (k, c) };
                let s: f64 = marg[lo..=hi].iter().sum::<f64>() - (marg[c] + marg[k]) / 2.0;
                s * s
            }
        }
    };

    let (mut d_o, mut d_e) = (0.0, 0.0);
    for c in 0..v {
        for k in 0..v {
            let d = delta2(c, k);
            d_o += o[c][k] * d;
            d_e += marg[c] * marg[k] * d;
        }
    }
    if d_e == 0.0 {
        return Err(MetaError::Degenerate("no expected disagreement".into()));
    }
    Ok(1.0 - (n - 1.0) * d_o / d_e)
}

/// Transpose a raters-by-items matrix (None = missing) into units.
pub fn units_from_rater_rows(rows: &[Vec<Option<f64>>]) -> Vec<Vec<f64>> {
    let items = rows.iter().map(Vec::len).max().unwrap_or(0);
    (0..items)
        .map(|i| rows.iter().filter_map(|r| r.get(i).copied().flatten()).collect())
        .collect()
}
