//! Cross-cutting statistics: answer distributions and TV distance, chance
//! levels, bootstrap intervals, rank comparison and attention differences.

pub mod attention;
pub mod bootstrap;
pub mod distribution;
pub mod rank;

pub use attention::{attention_diff, AttentionDiff};
pub use bootstrap::{accuracy_ci, ConfidenceInterval};
pub use distribution::{tv_distance, AnswerDistribution, TvMode};
pub use rank::{rank_compare, spearman, RankComparison};

use crate::error::{Error, Result};
use crate::manifest::SampleRecord;

/// Expected accuracy of uniform guessing: mean of `1 / |choices|` over samples.
///
/// Summed as an exact fraction over the least common multiple of the choice
/// counts, so the result is the correctly rounded value of the true mean.
pub fn chance_level(samples: &[SampleRecord]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    if let Some(s) = samples.iter().find(|s| s.choices.is_empty()) {
        return Err(Error::sample(&s.sample_id, "no choices"));
    }
    let lcm = samples
        .iter()
        .map(|s| s.choices.len() as u128)
        .fold(1u128, |acc, k| acc / gcd(acc, k) * k);
    let numerator: u128 = samples.iter().map(|s| lcm / s.choices.len() as u128).sum();
    let denominator = lcm * samples.len() as u128;
    let g = gcd(numerator, denominator);
    Ok((numerator / g) as f64 / (denominator / g) as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
