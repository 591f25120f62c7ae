//! Visual readout accuracy across a sequence of layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_loaded, load_sample, outcome, VisualConfig};
use crate::exec::Execution;
use crate::manifest::Manifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPoint {
    pub layer: String,
    pub accuracy: f64,
    pub tie_rate: f64,
    pub invalid_rate: f64,
    pub samples: usize,
}

/// Accuracy per layer, in the order the layers are given. Each sample's dumps
/// are loaded once and evaluated at every layer.
pub fn layer_sweep(
    manifest: &Manifest,
    layers: &[String],
    cfg: &VisualConfig,
    exec: Execution,
) -> Result<Vec<LayerPoint>> {
    if layers.is_empty() {
        return Err(Error::Empty("layer list"));
    }
    if manifest.samples.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    let per_sample = exec.try_map(&manifest.samples, |s| {
        let archives = load_sample(manifest, s)?;
        layers
            .iter()
            .map(|layer| outcome(s, evaluate_loaded(s, &archives, layer, cfg)))
            .collect::<Result<Vec<_>>>()
    })?;

    let n = manifest.samples.len() as f64;
    Ok(layers
        .iter()
        .enumerate()
        .map(|(k, layer)| {
            let (mut correct, mut ties, mut invalid) = (0usize, 0usize, 0usize);
            for outcomes in &per_sample {
                let o = &outcomes[k];
                correct += o.correct as usize;
                ties += o.prediction.tie as usize;
                invalid += !o.prediction.valid as usize;
            }
            LayerPoint {
                layer: layer.clone(),
                accuracy: correct as f64 / n,
                tie_rate: ties as f64 / n,
                invalid_rate: invalid as f64 / n,
                samples: per_sample.len(),
            }
        })
        .collect())
}
