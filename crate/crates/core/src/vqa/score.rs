//! Scoring extracted VQA answers against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::extract::extract_choice;
use super::prompt::{option_texts, PromptVariant};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::manifest::{Manifest, SampleRecord, Task};
use crate::stats::{tv_distance, AnswerDistribution, TvMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    Sighted,
    /// Same prompt with a blank visual input.
    Blind,
}

impl AnswerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerMode::Sighted => "sighted",
            AnswerMode::Blind => "blind",
        }
    }
}

/// One line of an answers file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRecord {
    pub sample_id: String,
    pub mode: AnswerMode,
    pub raw_text: String,
    pub model_id: String,
    #[serde(default)]
    pub prompt_variant: PromptVariant,
    /// Free-form runner metadata, carried through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

pub fn load_answers(path: impl AsRef<Path>) -> Result<Vec<AnswerRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaOutcome {
    pub sample_id: String,
    pub task: Task,
    pub ground_truth: char,
    /// `None` when no letter could be extracted.
    pub extracted: Option<char>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaScore {
    pub mode: AnswerMode,
    pub model_id: String,
    pub outcomes: Vec<VqaOutcome>,
    pub accuracy: f64,
    pub invalid_rate: f64,
    pub distribution: AnswerDistribution,
}

impl VqaScore {
    pub fn correctness(&self) -> Vec<bool> {
        self.outcomes.iter().map(|o| o.correct).collect()
    }

    pub fn correct_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.correct).count()
    }
}

pub fn extract_for(sample: &SampleRecord, raw: &str) -> Option<char> {
    let texts = option_texts(sample).ok();
    extract_choice(raw, &sample.choices, texts.as_ref())
}

/// Scores the answers of one mode. Every manifest sample must be answered
/// exactly once and every answer must name a manifest sample.
pub fn score_vqa(
    manifest: &Manifest,
    answers: &[AnswerRecord],
    mode: AnswerMode,
    exec: Execution,
) -> Result<VqaScore> {
    if manifest.samples.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    let mut by_id: BTreeMap<&str, &AnswerRecord> = BTreeMap::new();
    let mut models = BTreeSet::new();
    for a in answers.iter().filter(|a| a.mode == mode) {
        if manifest.get(&a.sample_id).is_none() {
            return Err(Error::Answers(format!(
                "answer for unknown sample `{}`",
                a.sample_id
            )));
        }
        if by_id.insert(&a.sample_id, a).is_some() {
            return Err(Error::Answers(format!(
                "duplicate {} answer for sample `{}`",
                mode.as_str(),
                a.sample_id
            )));
        }
        models.insert(a.model_id.as_str());
    }
    if models.len() > 1 {
        return Err(Error::Answers(format!(
            "{} answers mix models: {}",
            mode.as_str(),
            models.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let missing: Vec<&str> = manifest
        .samples
        .iter()
        .map(|s| s.sample_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(5).copied().collect();
        return Err(Error::Answers(format!(
            "{} {} answers missing (first: {})",
            missing.len(),
            mode.as_str(),
            shown.join(", ")
        )));
    }
    let outcomes = exec.map(&manifest.samples, |s| {
        let extracted = extract_for(s, &by_id[s.sample_id.as_str()].raw_text);
        VqaOutcome {
            sample_id: s.sample_id.clone(),
            task: s.task,
            ground_truth: s.ground_truth,
            extracted,
            correct: extracted == Some(s.ground_truth),
        }
    });
    let n = outcomes.len() as f64;
    let distribution = AnswerDistribution::from_answers(outcomes.iter().map(|o| o.extracted));
    Ok(VqaScore {
        mode,
        model_id: models.into_iter().next().unwrap_or_default().to_string(),
        accuracy: outcomes.iter().filter(|o| o.correct).count() as f64 / n,
        invalid_rate: distribution.invalid as f64 / n,
        distribution,
        outcomes,
    })
}

/// The three pairwise distances between sighted, blind and ground-truth distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvTriple {
    pub sighted_blind: f64,
    pub sighted_gt: f64,
    pub blind_gt: f64,
}

impl TvTriple {
    fn compute(
        s: &AnswerDistribution,
        b: &AnswerDistribution,
        g: &AnswerDistribution,
        mode: TvMode,
    ) -> Result<Self> {
        Ok(TvTriple {
            sighted_blind: tv_distance(s, b, mode)?,
            sighted_gt: tv_distance(s, g, mode)?,
            blind_gt: tv_distance(b, g, mode)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindComparison {
    pub sighted: VqaScore,
    pub blind: VqaScore,
    pub ground_truth: AnswerDistribution,
    /// Invalid answers dropped before normalizing; `None` when every answer
    /// in a mode was invalid.
    pub tv_letters: Option<TvTriple>,
    /// Invalid answers kept as their own category.
    pub tv_with_invalid: TvTriple,
}

/// Compares sighted and blind answers over the same sample set.
pub fn blind_compare(
    manifest: &Manifest,
    answers: &[AnswerRecord],
    exec: Execution,
) -> Result<BlindComparison> {
    let sighted = score_vqa(manifest, answers, AnswerMode::Sighted, exec)?;
    let blind = score_vqa(manifest, answers, AnswerMode::Blind, exec)?;
    if sighted.model_id != blind.model_id {
        return Err(Error::Answers(format!(
            "sighted answers come from `{}` but blind answers from `{}`",
            sighted.model_id, blind.model_id
        )));
    }
    let ground_truth =
        AnswerDistribution::from_answers(manifest.samples.iter().map(|s| Some(s.ground_truth)));
    let (s, b, g) = (&sighted.distribution, &blind.distribution, &ground_truth);
    let tv_letters = TvTriple::compute(s, b, g, TvMode::LettersOnly).ok();
    let tv_with_invalid = TvTriple::compute(s, b, g, TvMode::WithInvalid)?;
    Ok(BlindComparison {
        sighted,
        blind,
        ground_truth,
        tv_letters,
        tv_with_invalid,
    })
}
