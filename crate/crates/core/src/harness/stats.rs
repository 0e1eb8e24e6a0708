//! Empirical CDFs and percentiles of rate samples.

use serde::Serialize;

/// Linear-interpolation percentile (Hyndman-Fan type 7) of sorted data, `q ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// `(x_(i), i/n)` for sorted data.
pub fn cdf_table(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Percentiles {
    pub n: usize,
    /// Rate reached by 99% of users.
    pub p1: f64,
    /// Rate reached by 95% of users.
    pub p5: f64,
    pub median: f64,
    pub p95: f64,
}

impl Percentiles {
    pub fn of_sorted(sorted: &[f64]) -> Option<Self> {
        Some(Percentiles {
            n: sorted.len(),
            p1: percentile(sorted, 0.01)?,
            p5: percentile(sorted, 0.05)?,
            median: percentile(sorted, 0.5)?,
            p95: percentile(sorted, 0.95)?,
        })
    }
}
