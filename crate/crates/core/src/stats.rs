//! Trimmed-mean measurement protocol: drop exactly one minimum and one
//! maximum observation and average the rest.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("trimmed mean needs at least 3 observations, got {0}")]
pub struct TooFewObservations(pub usize);

/// Average after discarding the single smallest and single largest
/// observation. Duplicate extremes are dropped only once each.
pub fn trimmed_mean(observations: &[f64]) -> Result<f64, TooFewObservations> {
    if observations.len() < 3 {
        return Err(TooFewObservations(observations.len()));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in observations {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    Ok((sum - min - max) / (observations.len() - 2) as f64)
}

/// Speedup of a candidate over a baseline, by trimmed means.
pub fn speedup(baseline_trimmed: f64, candidate_trimmed: f64) -> f64 {
    baseline_trimmed / candidate_trimmed
}
