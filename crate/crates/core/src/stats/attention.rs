//! Attention-map differences before and after fine-tuning.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::archive::Tensor;
use crate::error::{Error, Result};

/// Row sums must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDiff {
    pub heads: usize,
    pub queries: usize,
    pub keys: usize,
    /// `after − before`, shape `[heads, queries, keys]`, row-major.
    pub diff: Vec<f64>,
    pub image_tokens: Range<usize>,
    /// Max over heads of the difference on image-token columns, shape `[queries, image_tokens.len()]`.
    pub saliency: Vec<f64>,
}

impl AttentionDiff {
    pub fn diff_at(&self, h: usize, q: usize, k: usize) -> f64 {
        self.diff[(h * self.queries + q) * self.keys + k]
    }

    pub fn saliency_at(&self, q: usize, col: usize) -> f64 {
        self.saliency[q * self.image_tokens.len() + col]
    }

    /// Per-column maximum of the saliency map over queries.
    pub fn column_peak(&self) -> Vec<f64> {
        let n = self.image_tokens.len();
        (0..n)
            .map(|c| {
                (0..self.queries)
                    .map(|q| self.saliency_at(q, c))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }
}

fn attention_dims(t: &Tensor) -> Result<[usize; 3]> {
    match t.shape() {
        [h, q, k] => Ok([*h, *q, *k]),
        other => Err(Error::InvalidArgument(format!(
            "attention tensor must be [heads, queries, keys], got {other:?}"
        ))),
    }
}

fn check_rows(data: &[f32], queries: usize, keys: usize) -> Result<()> {
    for (i, chunk) in data.chunks(keys).enumerate() {
        let sum: f64 = chunk.iter().map(|&v| v as f64).sum();
        if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotNormalized {
                head: i / queries,
                row: i % queries,
                sum,
            });
        }
    }
    Ok(())
}

pub fn attention_diff(
    before: &Tensor,
    after: &Tensor,
    image_tokens: Range<usize>,
) -> Result<AttentionDiff> {
    let dims = attention_dims(before)?;
    if attention_dims(after)? != dims {
        return Err(Error::DimensionMismatch {
            expected: dims.iter().product(),
            actual: after.numel(),
        });
    }
    let [heads, queries, keys] = dims;
    if heads == 0 || queries == 0 || keys == 0 {
        return Err(Error::Empty("attention tensor"));
    }
    if image_tokens.start >= image_tokens.end || image_tokens.end > keys {
        return Err(Error::InvalidArgument(format!(
            "image token range {image_tokens:?} outside 0..{keys}"
        )));
    }
    let b = before.to_f32()?;
    let a = after.to_f32()?;
    check_rows(&b, queries, keys)?;
    check_rows(&a, queries, keys)?;
    let diff: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(&x, &y)| x as f64 - y as f64)
        .collect();
    let n_img = image_tokens.len();
    let mut saliency = vec![f64::NEG_INFINITY; queries * n_img];
    for h in 0..heads {
        for q in 0..queries {
            let row = &diff[(h * queries + q) * keys..][..keys];
            for (c, &d) in row[image_tokens.clone()].iter().enumerate() {
                let s = &mut saliency[q * n_img + c];
                *s = s.max(d);
            }
        }
    }
    Ok(AttentionDiff {
        heads,
        queries,
        keys,
        diff,
        image_tokens,
        saliency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(h: usize, q: usize, k: usize) -> Vec<f32> {
        vec![1.0 / k as f32; h * q * k]
    }

    fn tensor(h: usize, q: usize, k: usize, data: Vec<f32>) -> Tensor {
        Tensor::from_f32(vec![h, q, k], &data).unwrap()
    }

    #[test]
    fn identical_maps_give_zero() {
        let t = tensor(2, 3, 5, uniform(2, 3, 5));
        let d = attention_diff(&t, &t, 1..4).unwrap();
        assert!(d.diff.iter().all(|&v| v == 0.0));
        assert!(d.saliency.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn planted_column_peaks() {
        let (h, q, k) = (2, 3, 5);
        let before = uniform(h, q, k);
        let mut after = before.clone();
        for row in after.chunks_mut(k) {
            row[3] += 0.2;
            row[0] -= 0.2;
        }
        let d = attention_diff(&tensor(h, q, k, before), &tensor(h, q, k, after), 1..5).unwrap();
        let peak = d.column_peak();
        let best = (0..peak.len())
            .max_by(|&x, &y| peak[x].total_cmp(&peak[y]))
            .unwrap();
        assert_eq!(best, 2);
        assert!((peak[2] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = tensor(1, 2, 4, uniform(1, 2, 4));
        let u = tensor(1, 2, 2, uniform(1, 2, 2));
        assert!(attention_diff(&t, &u, 0..2).is_err());
        let bad = tensor(1, 2, 4, vec![0.5; 8]);
        assert!(matches!(
            attention_diff(&t, &bad, 0..2),
            Err(Error::NotNormalized { .. })
        ));
        assert!(attention_diff(&t, &t, 2..9).is_err());
    }
}
