//! Series diagnostics: autocorrelation, downsampling, peak finding, and
//! calendar-bucket statistics. These are the tools used to decide which
//! stamp features a dataset can support before any training happens.

use std::collections::BTreeMap;

use crate::timefeat::CalendarStamp;
use crate::{Error, Result};

/// Autocorrelation `ρ_k` for `k = 0..=max_lag`.
///
/// Uses the standard single-denominator estimator: with `μ` the full-series
/// mean, `ρ_k = Σ_{t<N−k} (x_t−μ)(x_{t+k}−μ) / Σ_t (x_t−μ)²`. `ρ_0` is
/// exactly 1.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag < 1 {
        return Err(Error::Config("max_lag must be at least 1".into()));
    }
    if max_lag >= n {
        return Err(Error::Config(format!(
            "max_lag {max_lag} needs a series longer than {max_lag} points, got {n}"
        )));
    }
    if let Some(bad) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "series contains a non-finite value ({bad})"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|d| d * d).sum();
    if (denom / n as f64).sqrt() <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::Data(
            "series is (effectively) constant; autocorrelation is undefined".into(),
        ));
    }
    let mut rho = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut num = 0.0;
        for t in 0..n - k {
            num += centered[t] * centered[t + k];
        }
        rho.push(num / denom);
    }
    Ok(rho)
}

/// Replace every block of `factor` consecutive points by its mean; a
/// trailing partial block is dropped.
pub fn downsample(series: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::Config("downsampling factor must be at least 1".into()));
    }
    if series.len() < factor {
        return Err(Error::Data(format!(
            "cannot downsample {} points by a factor of {factor}",
            series.len()
        )));
    }
    Ok(series
        .chunks_exact(factor)
        .map(|block| block.iter().sum::<f64>() / factor as f64)
        .collect())
}

/// Lags `k ≥ min_lag` that are strict local maxima of `rho`
/// (`rho[k−1] < rho[k] > rho[k+1]`), sorted by descending value, ties
/// broken toward the smaller lag.
pub fn find_peaks(rho: &[f64], min_lag: usize) -> Vec<usize> {
    let lo = min_lag.max(1);
    let mut peaks: Vec<usize> = (lo..rho.len().saturating_sub(1))
        .filter(|&k| rho[k] > rho[k - 1] && rho[k] > rho[k + 1])
        .collect();
    peaks.sort_by(|&a, &b| {
        rho[b]
            .partial_cmp(&rho[a])
            .expect("acf values are finite")
            .then(a.cmp(&b))
    });
    peaks
}

/// Distribution summary of one calendar bucket.
#[derive(Debug, Clone)]
pub struct BucketStats {
    pub key: String,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `bins + 1` equal-width bin edges spanning the bucket's value range.
    pub hist_edges: Vec<f64>,
    /// Points per bin; sums to `count`.
    pub hist_counts: Vec<usize>,
}

/// Group the values whose stamps satisfy `predicate` by `group(stamp)` and
/// summarize each group's distribution with `bins` equal-width histogram
/// bins. Groups come back sorted by key.
pub fn bucket_distribution(
    stamps: &[CalendarStamp],
    series: &[f64],
    predicate: impl Fn(&CalendarStamp) -> bool,
    group: impl Fn(&CalendarStamp) -> String,
    bins: usize,
) -> Result<Vec<BucketStats>> {
    if stamps.len() != series.len() {
        return Err(Error::Data(format!(
            "got {} stamps but {} values",
            stamps.len(),
            series.len()
        )));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least 1 bin".into()));
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (stamp, &v) in stamps.iter().zip(series) {
        if predicate(stamp) {
            groups.entry(group(stamp)).or_default().push(v);
        }
    }
    if groups.is_empty() {
        return Err(Error::Data("the predicate selected no rows".into()));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (key, values) in groups {
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let hist_edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut hist_counts = vec![0usize; bins];
        for &v in &values {
            let mut b = ((v - lo) / width) as usize;
            if b >= bins {
                b = bins - 1; // the maximum lands in the last bin
            }
            hist_counts[b] += 1;
        }
        out.push(BucketStats {
            key,
            count,
            mean,
            std: var.sqrt(),
            hist_edges,
            hist_counts,
        });
    }
    Ok(out)
}
