use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of answered letters, with unparseable answers kept in their own bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub counts: BTreeMap<char, u64>,
    pub invalid: u64,
}

/// Whether the invalid bucket takes part in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TvMode {
    /// Invalid answers are dropped and letter probabilities renormalized.
    LettersOnly,
    /// Invalid answers form one more category.
    WithInvalid,
}

impl AnswerDistribution {
    pub fn from_answers<I: IntoIterator<Item = Option<char>>>(answers: I) -> Self {
        let mut d = AnswerDistribution::default();
        for a in answers {
            d.add(a);
        }
        d
    }

    pub fn add(&mut self, answer: Option<char>) {
        match answer {
            Some(l) => *self.counts.entry(l).or_default() += 1,
            None => self.invalid += 1,
        }
    }

    pub fn valid_total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// All answers including invalid ones.
    pub fn total(&self) -> u64 {
        self.valid_total() + self.invalid
    }

    fn total_for(&self, mode: TvMode) -> u64 {
        match mode {
            TvMode::LettersOnly => self.valid_total(),
            TvMode::WithInvalid => self.total(),
        }
    }

    pub fn probability(&self, letter: char, mode: TvMode) -> f64 {
        let total = self.total_for(mode);
        if total == 0 {
            return 0.0;
        }
        self.counts.get(&letter).copied().unwrap_or(0) as f64 / total as f64
    }

    pub fn probabilities(&self, mode: TvMode) -> BTreeMap<char, f64> {
        self.counts
            .keys()
            .map(|&l| (l, self.probability(l, mode)))
            .collect()
    }
}

/// `0.5 · Σ |p_i − q_i|` over the union of both supports.
pub fn tv_distance(p: &AnswerDistribution, q: &AnswerDistribution, mode: TvMode) -> Result<f64> {
    let (tp, tq) = (p.total_for(mode), q.total_for(mode));
    if tp == 0 || tq == 0 {
        return Err(Error::Empty("answer distribution"));
    }
    let letters: BTreeSet<char> = p.counts.keys().chain(q.counts.keys()).copied().collect();
    let mut sum: f64 = letters
        .iter()
        .map(|&l| (p.probability(l, mode) - q.probability(l, mode)).abs())
        .sum();
    if mode == TvMode::WithInvalid {
        sum += (p.invalid as f64 / tp as f64 - q.invalid as f64 / tq as f64).abs();
    }
    Ok((0.5 * sum).clamp(0.0, 1.0))
}
