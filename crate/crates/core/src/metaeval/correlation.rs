//! Pearson, Spearman (average ranks) and Kendall tau-b.

use serde::{Deserialize, Serialize};

use super::MetaError;
use crate::types::Aspect;

fn check(xs: &[f64], ys: &[f64]) -> Result<(), MetaError> {
    if xs.len() != ys.len() {
        return Err(MetaError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetaError::TooFewSamples(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(MetaError::NonFinite);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetaError> {
    check(xs, ys)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetaError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their ranks.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, MetaError> {
    check(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Number of tied pairs inside runs of equal values of a sorted sequence.
fn tied_pairs<T>(sorted: &[T], eq: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sort `v` and return how many inversions the sort removed.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            merged.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// Kendall tau-b in O(n log n).
///
/// `tau_b = (C - D) / sqrt((n0 - Tx) (n0 - Ty))` with `n0 = n(n-1)/2` and
/// `Tx`, `Ty` the pairs tied in x and in y.
pub fn kendall(xs: &[f64], ys: &[f64]) -> Result<f64, MetaError> {
    check(xs, ys)?;
    let n = xs.len() as u64;
    let n0 = n * (n - 1) / 2;

    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let tx = tied_pairs(&pairs, |a, b| a.0 == b.0);
    let txy = tied_pairs(&pairs, |a, b| a == b);

    let mut y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut y);
    let ty = tied_pairs(&y, |a, b| a == b);

    if tx == n0 || ty == n0 {
        return Err(MetaError::ZeroVariance);
    }
    // concordant minus discordant, from the untied pair count and the swaps
    let num = n0 as f64 - tx as f64 - ty as f64 + txy as f64 - 2.0 * swaps as f64;
    let den = ((n0 - tx) as f64).sqrt() * ((n0 - ty) as f64).sqrt();
    Ok((num / den).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub aspect: Aspect,
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub kendall_tau: f64,
    pub n: usize,
}

/// All three coefficients between metric scores and human ratings.
pub fn correlate(aspect: Aspect, metric: &[f64], human: &[f64]) -> Result<CorrelationReport, MetaError> {
    Ok(CorrelationReport {
        aspect,
        pearson_r: pearson(metric, human)?,
        spearman_rho: spearman(metric, human)?,
        kendall_tau: kendall(metric, human)?,
        n: metric.len(),
    })
}
