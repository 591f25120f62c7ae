//! Closed-form ridge regression from patch features to per-patch depth.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::archive::{names, Tensor, TensorArchive};
use crate::error::{Error, Result};
use crate::geometry::{pixel_cell_means, PatchGrid};
use crate::manifest::{Manifest, Task};

/// Relative eigenvalue floor below which the centered Gram matrix counts as singular.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub weights: Vec<f32>,
    pub bias: f32,
    pub lambda: f32,
}

impl LinearProbe {
    pub fn predict(&self, features: &[f32]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: features.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(features)
            .map(|(&w, &f)| w as f64 * f as f64)
            .sum::<f64>()
            + self.bias as f64)
    }

    pub fn to_archive(&self, layer: &str) -> Result<TensorArchive> {
        let mut archive = TensorArchive::default();
        archive.insert(
            names::PROBE_WEIGHTS,
            Tensor::from_f32(vec![self.weights.len()], &self.weights)?,
        );
        archive.insert(names::PROBE_BIAS, Tensor::from_f32(vec![1], &[self.bias])?);
        archive
            .meta
            .insert("lambda".into(), self.lambda.to_string());
        archive.meta.insert("layer".into(), layer.to_string());
        Ok(archive)
    }

    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        let weights = archive.get_f32(names::PROBE_WEIGHTS)?;
        let bias = archive.get_f32(names::PROBE_BIAS)?;
        let bias = *bias.first().ok_or(Error::Empty("probe.bias"))?;
        let lambda = archive
            .meta
            .get("lambda")
            .and_then(|s| s.parse().ok())
            .unwrap_or(0.0);
        Ok(LinearProbe {
            weights,
            bias,
            lambda,
        })
    }
}

/// Minimizes `‖Xw + b − y‖² + λ‖w‖²` (bias unpenalized) for row-major
/// `features` of shape `N × channels`.
pub fn fit_ridge(
    features: &[f32],
    channels: usize,
    targets: &[f64],
    lambda: f64,
) -> Result<LinearProbe> {
    let n = targets.len();
    if n == 0 || channels == 0 {
        return Err(Error::Empty("ridge training data"));
    }
    if features.len() != n * channels {
        return Err(Error::DimensionMismatch {
            expected: n * channels,
            actual: features.len(),
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge lambda must be >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 && n < channels + 1 {
        return Err(Error::RankDeficient {
            rank: n.saturating_sub(1),
            needed: channels,
        });
    }

    let x = DMatrix::from_fn(n, channels, |r, c| features[r * channels + c] as f64);
    let y = DVector::from_column_slice(targets);
    let x_mean = x.row_mean();
    let y_mean = y.mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &x_mean;
    }
    let yc = y.add_scalar(-y_mean);

    let mut a = xc.tr_mul(&xc);
    if lambda == 0.0 {
        let eig = a.clone().symmetric_eigen();
        let max = eig.eigenvalues.amax();
        let rank = eig
            .eigenvalues
            .iter()
            .filter(|&&e| e > RANK_TOL * max.max(f64::MIN_POSITIVE))
            .count();
        if rank < channels {
            return Err(Error::RankDeficient {
                rank,
                needed: channels,
            });
        }
    }
    for i in 0..channels {
        a[(i, i)] += lambda;
    }
    let rhs = xc.tr_mul(&yc);
    let w = a
        .cholesky()
        .ok_or(Error::RankDeficient {
            rank: 0,
            needed: channels,
        })?
        .solve(&rhs);
    let bias = y_mean - (x_mean * &w)[(0, 0)];
    Ok(LinearProbe {
        weights: w.iter().map(|&v| v as f32).collect(),
        bias: bias as f32,
        lambda: lambda as f32,
    })
}

/// Applies the probe to every cell, producing a one-channel depth grid.
pub fn predict_depth_grid(probe: &LinearProbe, grid: &PatchGrid) -> Result<PatchGrid> {
    if grid.channels() != probe.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: probe.weights.len(),
            actual: grid.channels(),
        });
    }
    let depth = grid
        .data()
        .chunks_exact(grid.channels())
        .map(|f| probe.predict(f).map(|d| d as f32))
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchGrid::new(
        names::DEPTH_MAP,
        grid.grid_h(),
        grid.grid_w(),
        1,
        depth,
        grid.transform.clone(),
    )?)
}

/// Training rows for the depth probe: one row per patch cell that receives
/// ground-truth pixels, with the target equal to their mean depth.
pub fn depth_training_rows(
    manifest: &Manifest,
    layer: &str,
) -> Result<(Vec<f32>, usize, Vec<f64>)> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut channels = None;
    for sample in manifest
        .samples
        .iter()
        .filter(|s| s.task == Task::DepthOrder)
    {
        for (idx, image) in sample.images.iter().enumerate() {
            let archive = manifest.load_image(sample, idx)?;
            if !archive.tensors.contains_key(names::DEPTH_GT) {
                continue;
            }
            let tensor = archive.get(layer).map_err(|_| Error::MissingTensor {
                sample_id: sample.sample_id.clone(),
                layer: layer.to_string(),
            })?;
            let grid = PatchGrid::from_tensor(layer, tensor, image.transform.clone())?;
            let gt = archive.get_f32(names::DEPTH_GT)?;
            let cell_means = pixel_cell_means(&gt, &image.transform)?;
            match channels {
                None => channels = Some(grid.channels()),
                Some(c) if c != grid.channels() => {
                    return Err(Error::DimensionMismatch {
                        expected: c,
                        actual: grid.channels(),
                    })
                }
                _ => {}
            }
            for (cell, mean) in cell_means.iter().enumerate() {
                if let Some(m) = mean {
                    let (i, j) = (cell / grid.grid_w(), cell % grid.grid_w());
                    features.extend_from_slice(grid.cell(i, j));
                    targets.push(*m);
                }
            }
        }
    }
    let channels = channels.ok_or(Error::Empty("no depth.gt tensors in manifest"))?;
    Ok((features, channels, targets))
}

/// Summary of a depth-probe fit, written next to the probe archive.
pub fn fit_summary(
    probe: &LinearProbe,
    features: &[f32],
    targets: &[f64],
) -> BTreeMap<String, f64> {
    let c = probe.weights.len();
    let sse: f64 = features
        .chunks_exact(c)
        .zip(targets)
        .map(|(f, &t)| {
            let r = probe.predict(f).unwrap_or(f64::NAN) - t;
            r * r
        })
        .sum();
    let mut out = BTreeMap::new();
    out.insert("rows".to_string(), targets.len() as f64);
    out.insert(
        "rmse".to_string(),
        (sse / targets.len().max(1) as f64).sqrt(),
    );
    out.insert("lambda".to_string(), probe.lambda as f64);
    out
}
