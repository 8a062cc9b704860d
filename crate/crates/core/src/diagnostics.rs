//! Credible intervals, within-group autocorrelation, the multivariate
//! potential scale reduction factor and posterior summaries.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, HsmmError, Result};
use crate::sampler::{Draw, PosteriorDraws};
use crate::Segmentation;

/// Sample quantile with linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central credible interval at `level`.
pub fn credible_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(domain("credible interval of an empty sample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("credible level must lie in (0, 1), got {level}")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail)))
}

/// Lag-1 sample autocorrelation; `None` for fewer than 3 points or zero variance.
pub fn lag1_autocorrelation(x: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if denom <= 0.0 {
        return None;
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    Some(num / denom)
}

/// Unweighted mean lag-1 autocorrelation over the segments of `seg`.
pub fn segment_autocorrelation(y: &[f64], seg: &Segmentation) -> Result<f64> {
    let r: Vec<f64> = seg.segments().filter_map(|s| lag1_autocorrelation(&y[s.start..s.end()])).collect();
    if r.is_empty() {
        return Err(domain("no segment with at least 3 points and non-zero variance"));
    }
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// Mean lag-1 autocorrelation over consecutive fixed-size groups, averaged
/// over every group size in `sizes`.
pub fn grouped_autocorrelation(y: &[f64], sizes: RangeInclusive<usize>) -> Result<f64> {
    let mut per_size = Vec::new();
    for g in sizes {
        let r: Vec<f64> = y.chunks_exact(g.max(1)).filter_map(lag1_autocorrelation).collect();
        if !r.is_empty() {
            per_size.push(r.iter().sum::<f64>() / r.len() as f64);
        }
    }
    if per_size.is_empty() {
        return Err(domain("series too short for the requested group sizes"));
    }
    Ok(per_size.iter().sum::<f64>() / per_size.len() as f64)
}

/// Brooks–Gelman multivariate potential scale reduction factor.
///
/// `chains[c][t]` is the parameter vector of chain `c` at draw `t`.
pub fn mpsrf(chains: &[Vec<Vec<f64>>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(domain("MPSRF needs at least two chains"));
    }
    let l = chains[0].len();
    if l < 10 || chains.iter().any(|c| c.len() != l) {
        return Err(domain("MPSRF needs chains of equal length, at least 10"));
    }
    let d = chains[0][0].len();
    if d == 0 || chains.iter().flatten().any(|x| x.len() != d) {
        return Err(domain("every draw must have the same non-zero dimension"));
    }
    let means: Vec<DVector<f64>> = chains
        .iter()
        .map(|c| c.iter().fold(DVector::zeros(d), |acc, x| acc + DVector::from_column_slice(x)) / l as f64)
        .collect();
    let grand = means.iter().fold(DVector::zeros(d), |acc, x| acc + x) / m as f64;
    let mut w = DMatrix::<f64>::zeros(d, d);
    for (c, mean) in chains.iter().zip(&means) {
        for x in c {
            let dev = DVector::from_column_slice(x) - mean;
            w += &dev * dev.transpose();
        }
    }
    w /= (m * (l - 1)) as f64;
    let mut b_over_l = DMatrix::<f64>::zeros(d, d);
    for mean in &means {
        let dev = mean - &grand;
        b_over_l += &dev * dev.transpose();
    }
    b_over_l /= (m - 1) as f64;

    let chol = w.clone().cholesky().ok_or_else(|| HsmmError::Singular { dims: dependent_dims(&w) })?;
    let l_inv = chol.l().try_inverse().ok_or_else(|| HsmmError::Singular { dims: dependent_dims(&w) })?;
    let sym = &l_inv * b_over_l * l_inv.transpose();
    let sym = (&sym + sym.transpose()) / 2.0;
    let lambda = sym.symmetric_eigenvalues().max();
    Ok((l - 1) as f64 / l as f64 + (m + 1) as f64 / m as f64 * lambda)
}

/// Dimensions that are linearly dependent on the ones before them.
fn dependent_dims(w: &DMatrix<f64>) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    for k in 0..w.nrows() {
        let mut idx = kept.clone();
        idx.push(k);
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| w[(idx[i], idx[j])]);
        let scale = idx.iter().map(|&i| w[(i, i)].abs()).fold(0.0, f64::max);
        let ok = w[(k, k)] > 1e-12 * scale.max(f64::MIN_POSITIVE)
            && sub.cholesky().is_some_and(|c| c.l().diagonal().iter().all(|v| *v > 1e-9 * scale.sqrt()));
        if ok {
            kept.push(k);
        } else {
            bad.push(k);
        }
    }
    bad
}

/// Parameter vector of a draw used for the MPSRF: means, variances,
/// coefficients, then transition and initial probabilities with the last
/// free entry of every simplex left out (it is determined by the others).
pub fn mpsrf_vector(draw: &Draw) -> Vec<f64> {
    let m = draw.mu.len();
    let mut v = draw.mu.clone();
    v.extend(&draw.sigma2);
    v.extend(draw.b.iter().flatten());
    if m > 2 {
        for (j, row) in draw.p.iter().enumerate() {
            let off: Vec<f64> = row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, p)| *p).collect();
            v.extend(&off[..off.len() - 1]);
        }
    }
    for r in &draw.rho {
        v.extend(&r[..r.len() - 1]);
    }
    v
}

/// MPSRF over several chains of the same model using [`mpsrf_vector`].
pub fn chains_mpsrf(chains: &[PosteriorDraws]) -> Result<f64> {
    let traces: Vec<Vec<Vec<f64>>> = chains.iter().map(|c| c.draws.iter().map(mpsrf_vector).collect()).collect();
    mpsrf(&traces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Per-state segment counts and realized duration-rate statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub state: usize,
    pub mean_segments: f64,
    pub phi_mean: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub level: f64,
    pub parameters: Vec<SummaryRow>,
    pub rates: Vec<RateSummary>,
}

/// Mean and central interval for each named trace.
pub fn summarize_traces(traces: &[(String, Vec<f64>)], level: f64) -> Result<Vec<SummaryRow>> {
    traces
        .iter()
        .map(|(name, x)| {
            let (low, high) = credible_interval(x, level)?;
            Ok(SummaryRow { parameter: name.clone(), mean: x.iter().sum::<f64>() / x.len() as f64, low, high })
        })
        .collect()
}

/// Named scalar traces of every sampled parameter, 1-based state labels.
pub fn parameter_traces(draws: &PosteriorDraws, coefficient_names: &[String]) -> Vec<(String, Vec<f64>)> {
    let Some(first) = draws.draws.first() else {
        return Vec::new();
    };
    let m = first.mu.len();
    let mut out = Vec::new();
    for j in 0..m {
        out.push((format!("mu_{}", j + 1), draws.trace(|d| d.mu[j])));
    }
    for j in 0..m {
        out.push((format!("sigma2_{}", j + 1), draws.trace(|d| d.sigma2[j])));
    }
    for s in 0..first.rho.len() {
        for j in 0..m {
            out.push((format!("rho_{}_{}", s + 1, j + 1), draws.trace(|d| d.rho[s][j])));
        }
    }
    for j in 0..first.p.len() {
        for k in (0..m).filter(|&k| k != j) {
            out.push((format!("p_{}_{}", j + 1, k + 1), draws.trace(|d| d.p[j][k])));
        }
    }
    for j in 0..first.b.len() {
        for (c, name) in coefficient_names.iter().enumerate() {
            out.push((format!("b_{}_{}", j + 1, name), draws.trace(|d| d.b[j][c])));
        }
    }
    out
}

/// Posterior means and intervals of every scalar parameter plus the
/// per-state duration-rate statistics.
pub fn summarize(draws: &PosteriorDraws, coefficient_names: &[String], level: f64) -> Result<Summary> {
    let parameters = summarize_traces(&parameter_traces(draws, coefficient_names), level)?;
    let mut rates = Vec::new();
    if draws.draws.first().is_some_and(|d| !d.rates.is_empty()) {
        for j in 0..draws.n_states() {
            let stats: Vec<_> = draws.draws.iter().filter_map(|d| d.rates[j]).collect();
            let n = draws.draws.len() as f64;
            let mean_segments = draws.draws.iter().map(|d| d.segment_counts[j] as f64).sum::<f64>() / n;
            let (phi_mean, phi_min, phi_max) = if stats.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    stats.iter().map(|s| s.mean).sum::<f64>() / stats.len() as f64,
                    stats.iter().map(|s| s.min).fold(f64::INFINITY, f64::min),
                    stats.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max),
                )
            };
            rates.push(RateSummary { state: j + 1, mean_segments, phi_mean, phi_min, phi_max });
        }
    }
    Ok(Summary { level, parameters, rates })
}
