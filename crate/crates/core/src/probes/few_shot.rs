//! Few-shot odd-one-out with a logistic classifier over pairwise CLS
//! embedding differences.
//!
//! For a held-out trial, the classifier is trained on a random 75% of the
//! other trials in its condition. Each training trial contributes one
//! [`DiffVector`] per image pair, labelled 1 when the pair contains the odd
//! image. At inference every image is scored by the summed odd-pair
//! probability of the pairs it belongs to, and the highest-scoring image is
//! predicted. The split and fit are repeated and the majority vote reported.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{embedding, load_sample};
use crate::exec::Execution;
use crate::manifest::{Manifest, Task};
use crate::probes::logistic::{fit_logistic, DiffVector, LogisticModel};
use crate::readout::Prediction;
use crate::rng;

/// Minimum number of same-condition training trials for a held-out trial.
pub const MIN_CONDITION_TRIALS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotTrial {
    pub id: String,
    pub condition: String,
    pub embeddings: Vec<Vec<f32>>,
    pub odd_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotConfig {
    pub lr: f64,
    pub epochs: usize,
    pub trials_per_point: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig {
            lr: 0.5,
            epochs: 200,
            trials_per_point: 10,
            train_fraction: 0.75,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotOutcome {
    pub trial_id: String,
    pub prediction: Prediction,
    /// Fraction of repetitions that picked the odd image.
    pub accuracy: f64,
    pub votes: Vec<char>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSummary {
    pub outcomes: Vec<FewShotOutcome>,
    /// Fraction of trials whose majority vote is correct.
    pub accuracy: f64,
    /// Mean per-repetition accuracy over trials.
    pub mean_repetition_accuracy: f64,
}

/// Builds trials from the odd-one-out samples of a manifest, embedding each
/// image with `layer`. Samples without a condition share the condition `default`.
pub fn trials_from_manifest(
    manifest: &Manifest,
    layer: &str,
    exec: Execution,
) -> Result<Vec<FewShotTrial>> {
    let samples: Vec<_> = manifest
        .samples
        .iter()
        .filter(|s| s.task == Task::OddOneOut)
        .collect();
    if samples.is_empty() {
        return Err(Error::Empty("odd-one-out samples"));
    }
    exec.try_map(&samples, |s| {
        let archives = load_sample(manifest, s)?;
        let embeddings = archives
            .iter()
            .map(|a| embedding(s, a, layer))
            .collect::<Result<Vec<_>>>()?;
        let odd_index = s
            .ground_truth_index()
            .ok_or_else(|| Error::sample(&s.sample_id, "ground truth not among choices"))?;
        Ok(FewShotTrial {
            id: s.sample_id.clone(),
            condition: s.condition.clone().unwrap_or_else(|| "default".into()),
            embeddings,
            odd_index,
        })
    })
}

/// All `C(n, 2)` pair differences of a trial, labelled by odd-item membership.
pub fn pair_examples(trial: &FewShotTrial) -> Vec<DiffVector> {
    let n = trial.embeddings.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let label = i == trial.odd_index || j == trial.odd_index;
            out.push(DiffVector::between(
                &trial.embeddings[i],
                &trial.embeddings[j],
                label,
            ));
        }
    }
    out
}

/// Per-image score: sum of odd-pair probabilities over the pairs containing it.
pub fn image_scores(model: &LogisticModel, embeddings: &[Vec<f32>]) -> Vec<f64> {
    let n = embeddings.len();
    let mut scores = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = DiffVector::between(&embeddings[i], &embeddings[j], false);
            let p = model.probability(&d.values);
            scores[i] += p;
            scores[j] += p;
        }
    }
    scores
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_trial(t: &FewShotTrial) -> Result<()> {
    let n = t.embeddings.len();
    if !(3..=26).contains(&n) || t.odd_index >= n {
        return Err(Error::sample(
            &t.id,
            format!(
                "invalid few-shot trial: {n} images, odd index {}",
                t.odd_index
            ),
        ));
    }
    Ok(())
}

pub fn few_shot_odd_one_out(
    trials: &[FewShotTrial],
    holdout_id: &str,
    cfg: &FewShotConfig,
) -> Result<FewShotOutcome> {
    let (holdout_idx, holdout) = trials
        .iter()
        .enumerate()
        .find(|(_, t)| t.id == holdout_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no trial `{holdout_id}`")))?;
    check_trial(holdout)?;
    let pool: Vec<&FewShotTrial> = trials
        .iter()
        .enumerate()
        .filter(|(i, t)| *i != holdout_idx && t.condition == holdout.condition)
        .map(|(_, t)| t)
        .collect();
    if pool.len() < MIN_CONDITION_TRIALS {
        return Err(Error::InsufficientCondition {
            condition: holdout.condition.clone(),
            available: pool.len(),
            needed: MIN_CONDITION_TRIALS,
        });
    }
    for t in &pool {
        check_trial(t)?;
    }
    if cfg.trials_per_point == 0 {
        return Err(Error::InvalidArgument(
            "trials_per_point must be positive".into(),
        ));
    }
    let n_train = ((pool.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, pool.len());

    let n = holdout.embeddings.len();
    let mut votes = Vec::with_capacity(cfg.trials_per_point);
    for rep in 0..cfg.trials_per_point {
        let mut rng = rng::stream(cfg.seed, &[rng::key(holdout_id), rep as u64]);
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        let data: Vec<DiffVector> = order[..n_train]
            .iter()
            .flat_map(|&k| pair_examples(pool[k]))
            .collect();
        let model = fit_logistic(&data, cfg.lr, cfg.epochs)?;
        votes.push(argmax_first(&image_scores(&model, &holdout.embeddings)));
    }

    let mut counts = vec![0usize; n];
    for &v in &votes {
        counts[v] += 1;
    }
    let max = *counts.iter().max().expect("n >= 3");
    let winners: Vec<usize> = (0..n).filter(|&i| counts[i] == max).collect();
    let reps = cfg.trials_per_point as f64;
    let prediction = Prediction {
        letter: letter(winners[0]),
        scores: counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (letter(i), c as f64 / reps))
            .collect::<BTreeMap<_, _>>(),
        tie: winners.len() > 1,
        valid: true,
        fallback: false,
    };
    let hits = votes.iter().filter(|&&v| v == holdout.odd_index).count();
    Ok(FewShotOutcome {
        trial_id: holdout.id.clone(),
        prediction,
        accuracy: hits as f64 / reps,
        votes: votes.into_iter().map(letter).collect(),
    })
}

/// Runs [`few_shot_odd_one_out`] with every trial held out in turn.
pub fn few_shot_evaluate(
    trials: &[FewShotTrial],
    cfg: &FewShotConfig,
    exec: Execution,
) -> Result<FewShotSummary> {
    if trials.is_empty() {
        return Err(Error::Empty("few-shot trials"));
    }
    let outcomes = exec.try_map(trials, |t| few_shot_odd_one_out(trials, &t.id, cfg))?;
    let correct = outcomes
        .iter()
        .zip(trials)
        .filter(|(o, t)| o.prediction.letter == letter(t.odd_index))
        .count();
    let n = trials.len() as f64;
    Ok(FewShotSummary {
        accuracy: correct as f64 / n,
        mean_repetition_accuracy: outcomes.iter().map(|o| o.accuracy).sum::<f64>() / n,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(id: &str, cond: &str, n: usize, odd: usize) -> FewShotTrial {
        FewShotTrial {
            id: id.into(),
            condition: cond.into(),
            embeddings: (0..n)
                .map(|i| {
                    if i == odd {
                        vec![0.0, 1.0]
                    } else {
                        vec![1.0, 0.0]
                    }
                })
                .collect(),
            odd_index: odd,
        }
    }

    #[test]
    fn pair_labels_count_n_minus_one() {
        for (n, odd) in [(3, 0), (3, 2), (4, 1)] {
            let pairs = pair_examples(&trial("t", "c", n, odd));
            assert_eq!(pairs.len(), n * (n - 1) / 2);
            assert_eq!(pairs.iter().filter(|p| p.label).count(), n - 1);
            assert!(pairs.iter().all(|p| p.values.iter().all(|&v| v >= 0.0)));
        }
    }

    #[test]
    fn small_condition_rejected() {
        let trials = vec![
            trial("a", "c", 3, 0),
            trial("b", "c", 3, 1),
            trial("d", "c", 3, 2),
        ];
        assert!(matches!(
            few_shot_odd_one_out(&trials, "a", &FewShotConfig::default()),
            Err(Error::InsufficientCondition { available: 2, .. })
        ));
    }

    #[test]
    fn other_conditions_are_ignored() {
        let mut trials: Vec<FewShotTrial> = (0..5)
            .map(|i| trial(&format!("a{i}"), "c1", 3, i % 3))
            .collect();
        trials.push(trial("b0", "c2", 3, 0));
        assert!(few_shot_odd_one_out(&trials, "a0", &FewShotConfig::default()).is_ok());
        assert!(few_shot_odd_one_out(&trials, "b0", &FewShotConfig::default()).is_err());
    }

    #[test]
    fn planted_trials_solved_deterministically() {
        let trials: Vec<FewShotTrial> = (0..8)
            .map(|i| trial(&format!("t{i}"), "c", 3, i % 3))
            .collect();
        let cfg = FewShotConfig::default();
        let a = few_shot_odd_one_out(&trials, "t4", &cfg).unwrap();
        let b = few_shot_odd_one_out(&trials, "t4", &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.prediction.letter, 'B');
        assert_eq!(a.accuracy, 1.0);
    }
}
