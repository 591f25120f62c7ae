//! Encoder rank comparison between two evaluation strategies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    /// Rank 1 is the best model; ties share the average rank.
    pub ranks_a: BTreeMap<String, f64>,
    pub ranks_b: BTreeMap<String, f64>,
    /// `None` when either side has zero rank variance.
    pub spearman: Option<f64>,
    /// Every model tied for the top score.
    pub best_a: Vec<String>,
    pub best_b: Vec<String>,
    /// True when no model is best under both strategies.
    pub best_differs: bool,
}

/// Average ranks, 1 = highest score.
pub fn average_ranks(scores: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let mut order: Vec<(&String, f64)> = scores.iter().map(|(k, &v)| (k, v)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut ranks = BTreeMap::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && order[j + 1].1 == order[i].1 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for (name, _) in &order[i..=j] {
            ranks.insert((*name).clone(), avg);
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of two aligned rank vectors.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn best(scores: &BTreeMap<String, f64>) -> Vec<String> {
    let top = scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .filter(|(_, &v)| v == top)
        .map(|(k, _)| k.clone())
        .collect()
}

pub fn rank_compare(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<RankComparison> {
    if !a.keys().eq(b.keys()) {
        return Err(Error::ModelSetMismatch);
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(
            "rank comparison needs at least two models".into(),
        ));
    }
    if a.values().chain(b.values()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    let ranks_a = average_ranks(a);
    let ranks_b = average_ranks(b);
    let ra: Vec<f64> = ranks_a.values().copied().collect();
    let rb: Vec<f64> = ranks_b.values().copied().collect();
    let best_a = best(a);
    let best_b = best(b);
    let best_differs = !best_a.iter().any(|m| best_b.contains(m));
    Ok(RankComparison {
        spearman: spearman(&ra, &rb),
        ranks_a,
        ranks_b,
        best_a,
        best_b,
        best_differs,
    })
}
