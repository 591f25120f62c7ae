//! Batch visual evaluation: binds manifest samples and their dumps to the
//! readouts in [`crate::readout`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::archive::{ArchiveError, TensorArchive};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::PatchGrid;
use crate::manifest::{Manifest, SampleRecord, Task};
use crate::probes::ridge::{predict_depth_grid, LinearProbe};
use crate::readout::{
    correspondence_predict, depth_order_predict, gram_matrix, odd_one_out_predict, style_predict,
    GramNormalization, Prediction,
};

#[derive(Debug, Clone, Default)]
pub struct VisualConfig {
    pub gram: GramNormalization,
    /// When set, depth samples run this probe on the requested layer;
    /// otherwise the requested tensor is read as a depth grid directly.
    pub depth_probe: Option<LinearProbe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub task: Task,
    pub ground_truth: char,
    pub prediction: Prediction,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualRun {
    pub layer: String,
    pub outcomes: Vec<SampleOutcome>,
}

impl VisualRun {
    pub fn accuracy(&self) -> f64 {
        rate(&self.outcomes, |o| o.correct)
    }

    pub fn tie_rate(&self) -> f64 {
        rate(&self.outcomes, |o| o.prediction.tie)
    }

    pub fn invalid_rate(&self) -> f64 {
        rate(&self.outcomes, |o| !o.prediction.valid)
    }

    pub fn correctness(&self) -> Vec<bool> {
        self.outcomes.iter().map(|o| o.correct).collect()
    }
}

fn rate(outcomes: &[SampleOutcome], f: impl Fn(&SampleOutcome) -> bool) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| f(o)).count() as f64 / outcomes.len() as f64
}

/// Loads every image archive of a sample, in image order.
pub fn load_sample(manifest: &Manifest, sample: &SampleRecord) -> Result<Vec<TensorArchive>> {
    (0..sample.images.len())
        .map(|i| manifest.load_image(sample, i))
        .collect()
}

fn missing(sample: &SampleRecord, layer: &str) -> impl Fn(ArchiveError) -> Error {
    let sample_id = sample.sample_id.clone();
    let layer = layer.to_string();
    move |e| match e {
        ArchiveError::MissingTensor(_) => Error::MissingTensor {
            sample_id: sample_id.clone(),
            layer: layer.clone(),
        },
        e => e.into(),
    }
}

fn grid(
    sample: &SampleRecord,
    archives: &[TensorArchive],
    image: usize,
    layer: &str,
) -> Result<PatchGrid> {
    let archive = archives
        .get(image)
        .ok_or_else(|| Error::sample(&sample.sample_id, format!("no archive for image {image}")))?;
    let tensor = archive.get(layer).map_err(missing(sample, layer))?;
    PatchGrid::from_tensor(layer, tensor, sample.images[image].transform.clone())
}

/// A whole-image embedding: the tensor itself when 1-D, otherwise the mean
/// over all leading (spatial) positions.
pub(crate) fn embedding(
    sample: &SampleRecord,
    archive: &TensorArchive,
    layer: &str,
) -> Result<Vec<f32>> {
    let tensor = archive.get(layer).map_err(missing(sample, layer))?;
    let values = tensor.to_f32()?;
    let c = *tensor.shape().last().unwrap_or(&values.len());
    if tensor.shape().len() <= 1 || c == 0 {
        return Ok(values);
    }
    let positions = values.len() / c;
    let mut acc = vec![0.0f64; c];
    for row in values.chunks_exact(c) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    Ok(acc
        .into_iter()
        .map(|a| (a / positions as f64) as f32)
        .collect())
}

/// Runs the task's visual readout for one sample at one layer.
pub fn evaluate_loaded(
    sample: &SampleRecord,
    archives: &[TensorArchive],
    layer: &str,
    cfg: &VisualConfig,
) -> Result<Prediction> {
    match sample.task {
        t if t.is_correspondence() => {
            let kp = sample
                .keypoints
                .as_ref()
                .ok_or_else(|| Error::sample(&sample.sample_id, "missing keypoints"))?;
            let reference = grid(sample, archives, 0, layer)?;
            let target = grid(sample, archives, 1, layer)?;
            correspondence_predict(&reference, kp.reference, &target, &kp.options)
        }
        Task::ArtStyle => {
            let reference = gram_matrix(&grid(sample, archives, 0, layer)?, cfg.gram)?;
            let mut options = BTreeMap::new();
            for (i, &l) in sample.choices.iter().enumerate() {
                options.insert(
                    l,
                    gram_matrix(&grid(sample, archives, i + 1, layer)?, cfg.gram)?,
                );
            }
            style_predict(&reference, &options)
        }
        Task::OddOneOut => {
            let embeddings = archives
                .iter()
                .map(|a| embedding(sample, a, layer))
                .collect::<Result<Vec<_>>>()?;
            odd_one_out_predict(&embeddings)
        }
        Task::DepthOrder => {
            let features = grid(sample, archives, 0, layer)?;
            let depth = match &cfg.depth_probe {
                Some(probe) => predict_depth_grid(probe, &features)?,
                None => features,
            };
            let boxes = sample
                .choices
                .iter()
                .map(|&l| {
                    sample
                        .pixel_box(l)
                        .map(|b| (l, b))
                        .ok_or_else(|| Error::sample(&sample.sample_id, format!("missing box {l}")))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            depth_order_predict(&depth, &boxes)
        }
        _ => unreachable!(),
    }
}

/// Missing data aborts a run; numerical failures on a single sample (zero
/// vectors, degenerate inputs) mark that sample invalid instead.
fn is_fatal(e: &Error) -> bool {
    matches!(
        e,
        Error::MissingTensor { .. } | Error::Io { .. } | Error::Archive(_) | Error::Parse { .. }
    )
}

pub(crate) fn outcome(sample: &SampleRecord, result: Result<Prediction>) -> Result<SampleOutcome> {
    let (prediction, error) = match result {
        Ok(p) => (p, None),
        Err(e) if is_fatal(&e) => return Err(e),
        Err(e) => (Prediction::invalid(), Some(e.to_string())),
    };
    Ok(SampleOutcome {
        sample_id: sample.sample_id.clone(),
        task: sample.task,
        ground_truth: sample.ground_truth,
        correct: prediction.is_correct(sample.ground_truth),
        prediction,
        error,
    })
}

/// Evaluates every sample of the manifest at `layer`.
pub fn evaluate_visual(
    manifest: &Manifest,
    layer: &str,
    cfg: &VisualConfig,
    exec: Execution,
) -> Result<VisualRun> {
    let outcomes = exec.try_map(&manifest.samples, |s| {
        let archives = load_sample(manifest, s)?;
        outcome(s, evaluate_loaded(s, &archives, layer, cfg))
    })?;
    Ok(VisualRun {
        layer: layer.to_string(),
        outcomes,
    })
}
