//! Zero-shot visual readouts: keypoint correspondence by cosine similarity,
//! art style by Gram-matrix distance, odd-one-out by pairwise CLS similarity
//! and depth order by box-mean depth.
//!
//! Every readout returns a [`Prediction`] whose letter attains the extremal
//! score. Ties resolve to the alphabetically first letter and set `tie`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_to_grid, PatchGrid, PixelBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub letter: char,
    pub scores: BTreeMap<char, f64>,
    pub tie: bool,
    pub valid: bool,
    /// A depth box covered no patch center and was sampled at its center instead.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

impl Prediction {
    /// Placeholder for a sample that could not be evaluated.
    pub fn invalid() -> Self {
        Prediction {
            letter: '?',
            scores: BTreeMap::new(),
            tie: false,
            valid: false,
            fallback: false,
        }
    }

    pub fn is_correct(&self, ground_truth: char) -> bool {
        self.valid && self.letter == ground_truth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    Max,
    Min,
}

/// Picks the extremal score; `same(a, b)` decides whether two scores tie.
fn pick(scores: BTreeMap<char, f64>, goal: Goal, same: impl Fn(f64, f64) -> bool) -> Prediction {
    let best = scores
        .values()
        .copied()
        .reduce(|a, b| match goal {
            Goal::Max => a.max(b),
            Goal::Min => a.min(b),
        })
        .expect("at least one score");
    let mut tied = scores
        .iter()
        .filter(|(_, &s)| same(s, best))
        .map(|(&l, _)| l);
    let letter = tied.next().expect("best is attained");
    let tie = tied.next().is_some();
    Prediction {
        letter,
        scores,
        tie,
        valid: true,
        fallback: false,
    }
}

fn exact(a: f64, b: f64) -> bool {
    a == b
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Cosine similarity with f64 accumulation, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Picks the option point whose sampled feature is most similar to the
/// reference point's feature.
pub fn correspondence_predict(
    reference: &PatchGrid,
    ref_point: [f64; 2],
    target: &PatchGrid,
    options: &BTreeMap<char, [f64; 2]>,
) -> Result<Prediction> {
    if options.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "correspondence needs at least 2 options, got {}",
            options.len()
        )));
    }
    let ref_feat = reference.sample_pixel(ref_point[0], ref_point[1])?;
    let mut scores = BTreeMap::new();
    for (&l, pt) in options {
        let feat = target.sample_pixel(pt[0], pt[1])?;
        scores.insert(l, cosine_similarity(&ref_feat, &feat)?);
    }
    Ok(pick(scores, Goal::Max, exact))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramNormalization {
    /// Divide by the number of spatial positions.
    #[default]
    PatchCount,
    /// Raw `F Fᵀ`.
    None,
}

/// Channel-by-channel second-moment matrix of a feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleGram {
    channels: usize,
    matrix: Vec<f32>,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl StyleGram {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.matrix[r * self.channels + c]
    }

    /// Mean squared difference over all `C²` entries.
    pub fn mse(&self, other: &StyleGram) -> Result<f64> {
        if self.channels != other.channels {
            return Err(Error::DimensionMismatch {
                expected: self.channels,
                actual: other.channels,
            });
        }
        let sum: f64 = self
            .matrix
            .iter()
            .zip(&other.matrix)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum();
        Ok(sum / self.matrix.len() as f64)
    }
}

/// `G = F Fᵀ` with `F` the `C × (H·W)` feature matrix, optionally divided by `H·W`.
pub fn gram_matrix(grid: &PatchGrid, norm: GramNormalization) -> Result<StyleGram> {
    if grid.is_empty() {
        return Err(Error::Empty("feature grid"));
    }
    let c = grid.channels();
    let positions = grid.grid_h() * grid.grid_w();
    let mut acc = vec![0.0f64; c * c];
    for feat in grid.data().chunks_exact(c) {
        for (r, &fr) in feat.iter().enumerate() {
            let fr = fr as f64;
            let row = &mut acc[r * c..r * c + c];
            for (k, &fk) in feat.iter().enumerate().skip(r) {
                row[k] += fr * fk as f64;
            }
        }
    }
    let denom = match norm {
        GramNormalization::PatchCount => positions as f64,
        GramNormalization::None => 1.0,
    };
    let mut matrix = vec![0.0f32; c * c];
    for r in 0..c {
        for k in r..c {
            let v = (acc[r * c + k] / denom) as f32;
            matrix[r * c + k] = v;
            matrix[k * c + r] = v;
        }
    }
    Ok(StyleGram {
        channels: c,
        matrix,
        grid_h: grid.grid_h(),
        grid_w: grid.grid_w(),
    })
}

/// Picks the option whose Gram matrix is closest (lowest MSE) to the reference.
pub fn style_predict(
    reference: &StyleGram,
    options: &BTreeMap<char, StyleGram>,
) -> Result<Prediction> {
    if options.is_empty() {
        return Err(Error::Empty("style options"));
    }
    let mut scores = BTreeMap::new();
    for (&l, g) in options {
        scores.insert(l, reference.mse(g)?);
    }
    Ok(pick(scores, Goal::Min, exact))
}

/// Threshold under which two box-mean depths count as a tie.
pub const DEPTH_TIE_EPS: f64 = 1e-6;

/// Mean depth over the patch centers inside `b`; falls back to a bilinear
/// sample at the box center when none are covered. Returns `(mean, fell_back)`.
pub fn box_mean_depth(depth: &PatchGrid, b: &PixelBox) -> Result<(f64, bool)> {
    let gb = box_to_grid(b, &depth.transform)?;
    if gb.degenerate {
        let (u, v) = gb.center();
        return Ok((depth.bilinear_sample(u, v)?[0] as f64, true));
    }
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (i, j) in gb.cells() {
        sum += depth.cell(i, j)[0] as f64;
        n += 1;
    }
    Ok((sum / n as f64, false))
}

/// Picks the box with the smaller mean depth (larger values are farther away).
pub fn depth_order_predict(
    depth: &PatchGrid,
    boxes: &BTreeMap<char, PixelBox>,
) -> Result<Prediction> {
    if depth.channels() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: depth.channels(),
        });
    }
    if boxes.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "depth order needs exactly 2 boxes, got {}",
            boxes.len()
        )));
    }
    let mut scores = BTreeMap::new();
    let mut fallback = false;
    for (&l, b) in boxes {
        let (mean, fb) = box_mean_depth(depth, b)?;
        fallback |= fb;
        scores.insert(l, mean);
    }
    let mut p = pick(scores, Goal::Min, |a, b| (a - b).abs() < DEPTH_TIE_EPS);
    p.fallback = fallback;
    Ok(p)
}

/// Scores each embedding by its mean cosine similarity to the others and picks
/// the least similar one. Letters follow positions: A is the first embedding.
pub fn odd_one_out_predict(embeddings: &[Vec<f32>]) -> Result<Prediction> {
    let n = embeddings.len();
    if !(3..=26).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "odd-one-out needs at least 3 embeddings, got {n}"
        )));
    }
    let mut sim = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s = cosine_similarity(&embeddings[i], &embeddings[j])?;
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }
    let scores = (0..n)
        .map(|i| {
            let total: f64 = (0..n).filter(|&j| j != i).map(|j| sim[i * n + j]).sum();
            (letter(i), total / (n - 1) as f64)
        })
        .collect();
    Ok(pick(scores, Goal::Min, exact))
}
