//! Percentile bootstrap for accuracy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolated quantile of sorted data, `q ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Point accuracy with a `(1 − alpha)` percentile bootstrap interval.
/// Resample `b` draws from its own seeded stream, so the result does not
/// depend on the execution mode.
pub fn accuracy_ci(
    outcomes: &[bool],
    resamples: usize,
    alpha: f64,
    seed: u64,
    exec: Execution,
) -> Result<ConfidenceInterval> {
    if outcomes.is_empty() {
        return Err(Error::Empty("outcomes"));
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least one resample".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    let n = outcomes.len();
    let point = outcomes.iter().filter(|&&o| o).count() as f64 / n as f64;
    let mut means = exec.map_range(resamples, |b| {
        let mut rng = rng::stream(seed, &[b as u64]);
        let hits = (0..n).filter(|_| outcomes[rng.random_range(0..n)]).count();
        hits as f64 / n as f64
    });
    means.sort_by(|a, b| a.total_cmp(b));
    Ok(ConfidenceInterval {
        point,
        lo: quantile_sorted(&means, alpha / 2.0).min(point),
        hi: quantile_sorted(&means, 1.0 - alpha / 2.0).max(point),
    })
}
