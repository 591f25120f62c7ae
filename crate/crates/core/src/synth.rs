//! Seeded synthetic datasets with planted answers.
//!
//! Every task gets samples whose clean features make the visual readout
//! correct by construction. Each configured layer stores those features plus
//! Gaussian noise of its own standard deviation, so a layer list with growing
//! noise degrades accuracy and a list of zero-noise layers yields identical
//! tensors.
//!
//! Constructions, per task:
//! - correspondence: the ground-truth option point sits on a cell holding a
//!   copy of the reference cell's feature; all points are patch centers.
//! - depth: features are an affine function of per-cell depth, shared by all
//!   samples, so a ridge probe recovers depth exactly. `depth.map` and a
//!   pixel-level `depth.gt` are stored alongside.
//! - art style: the matching option is a spatial permutation of the
//!   reference, so its Gram matrix is identical.
//! - odd-one-out: twins are small perturbations of one vector, the odd image
//!   an independent draw. Every tenth sample has four images.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::archive::{names, Tensor, TensorArchive};
use crate::error::{Error, Result};
use crate::geometry::ImageTransform;
use crate::manifest::{ImageRef, Keypoints, Manifest, SampleRecord, Task};
use crate::rng;
use crate::vqa::{AnswerMode, AnswerRecord, PromptVariant};

const OBJECTS: [&str; 8] = [
    "table",
    "bookcase",
    "chair",
    "lamp",
    "sofa",
    "door",
    "plant",
    "television",
];

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub per_task: usize,
    pub tasks: Vec<Task>,
    pub channels: usize,
    /// Patches per side; images are square.
    pub grid: usize,
    pub patch_size: u32,
    /// Layer name and the noise standard deviation added to it.
    pub layers: Vec<(String, f32)>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            per_task: 8,
            tasks: Task::ALL.to_vec(),
            channels: 8,
            grid: 6,
            patch_size: 14,
            layers: vec![(names::vision_patch(0), 0.0)],
        }
    }
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

fn gauss(rng: &mut ChaCha8Rng) -> f32 {
    StandardNormal.sample(rng)
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| gauss(rng)).collect()
}

/// Clean features of one image, `[grid, grid, channels]` row-major.
struct Image {
    features: Vec<f32>,
    extra: Vec<(String, Tensor)>,
}

struct Builder<'a> {
    spec: &'a SynthSpec,
    depth_basis: (Vec<f32>, Vec<f32>),
}

impl Builder<'_> {
    fn cells(&self) -> usize {
        self.spec.grid * self.spec.grid
    }

    fn side(&self) -> u32 {
        self.spec.grid as u32 * self.spec.patch_size
    }

    fn center(&self, cell: usize) -> [f64; 2] {
        let p = self.spec.patch_size as f64;
        let (i, j) = (cell / self.spec.grid, cell % self.spec.grid);
        [(j as f64 + 0.5) * p, (i as f64 + 0.5) * p]
    }

    fn sample(&self, task: Task, k: usize) -> Result<(SampleRecord, Vec<Image>)> {
        let sample_id = format!("{}-{k:04}", task.as_str());
        let mut rng = rng::stream(self.spec.seed, &[rng::key(&sample_id)]);
        let c = self.spec.channels;
        let n_cells = self.cells();
        let mut record = SampleRecord {
            sample_id: sample_id.clone(),
            task,
            images: Vec::new(),
            keypoints: None,
            boxes: None,
            choices: Vec::new(),
            ground_truth: 'A',
            condition: None,
            object_names: None,
        };
        let images = match task {
            t if t.is_correspondence() => {
                let n = 4;
                let gt = rng.random_range(0..n);
                let reference = normal(&mut rng, n_cells * c);
                let mut target = normal(&mut rng, n_cells * c);
                let ref_cell = rng.random_range(0..n_cells);
                let mut cells: Vec<usize> = (0..n_cells).collect();
                cells.shuffle(&mut rng);
                let option_cells = &cells[..n];
                target[option_cells[gt] * c..][..c]
                    .copy_from_slice(&reference[ref_cell * c..][..c]);
                record.choices = (0..n).map(letter).collect();
                record.ground_truth = letter(gt);
                record.keypoints = Some(Keypoints {
                    reference: self.center(ref_cell),
                    options: option_cells
                        .iter()
                        .enumerate()
                        .map(|(i, &cell)| (letter(i), self.center(cell)))
                        .collect(),
                });
                vec![reference, target]
                    .into_iter()
                    .map(|features| Image {
                        features,
                        extra: vec![],
                    })
                    .collect()
            }
            Task::DepthOrder => {
                let depth: Vec<f32> = (0..n_cells).map(|_| rng.random_range(1.0..10.0)).collect();
                let mut cells: Vec<usize> = (0..n_cells).collect();
                cells.shuffle(&mut rng);
                let (a, b) = (
                    cells[0],
                    cells[1..]
                        .iter()
                        .copied()
                        .find(|&x| (depth[x] - depth[cells[0]]).abs() > 0.5)
                        .ok_or_else(|| {
                            Error::InvalidArgument("grid too small for depth samples".into())
                        })?,
                );
                let p = self.spec.patch_size as f64;
                let bbox = |cell: usize| {
                    let (i, j) = (
                        (cell / self.spec.grid) as f64,
                        (cell % self.spec.grid) as f64,
                    );
                    [j * p, i * p, (j + 1.0) * p, (i + 1.0) * p]
                };
                record.choices = vec!['A', 'B'];
                record.ground_truth = if depth[a] < depth[b] { 'A' } else { 'B' };
                record.boxes = Some(BTreeMap::from([('A', bbox(a)), ('B', bbox(b))]));
                let mut objects = OBJECTS.to_vec();
                objects.shuffle(&mut rng);
                record.object_names = Some(BTreeMap::from([
                    ('A', objects[0].to_string()),
                    ('B', objects[1].to_string()),
                ]));
                let (w, bias) = &self.depth_basis;
                let features: Vec<f32> = depth
                    .iter()
                    .flat_map(|&d| w.iter().zip(bias).map(move |(&wc, &bc)| d * wc + bc))
                    .collect();
                let side = self.side() as usize;
                let ps = self.spec.patch_size as usize;
                let pixels: Vec<f32> = (0..side * side)
                    .map(|idx| {
                        let (y, x) = (idx / side, idx % side);
                        depth[(y / ps) * self.spec.grid + x / ps]
                    })
                    .collect();
                let g = self.spec.grid;
                vec![Image {
                    features,
                    extra: vec![
                        (
                            names::DEPTH_MAP.to_string(),
                            Tensor::from_f32(vec![g, g], &depth)?,
                        ),
                        (
                            names::DEPTH_GT.to_string(),
                            Tensor::from_f32(vec![side, side], &pixels)?,
                        ),
                    ],
                }]
            }
            Task::ArtStyle => {
                let n = 2;
                let gt = rng.random_range(0..n);
                let style = |rng: &mut ChaCha8Rng| normal(rng, c * c);
                let paint = |rng: &mut ChaCha8Rng, mix: &[f32]| -> Vec<f32> {
                    let z = normal(rng, n_cells * c);
                    z.chunks(c)
                        .flat_map(|row| {
                            (0..c)
                                .map(move |k| (0..c).map(|m| row[m] * mix[m * c + k]).sum::<f32>())
                        })
                        .collect()
                };
                let ref_style = style(&mut rng);
                let reference = paint(&mut rng, &ref_style);
                let mut images = vec![reference.clone()];
                for i in 0..n {
                    if i == gt {
                        let mut order: Vec<usize> = (0..n_cells).collect();
                        order.shuffle(&mut rng);
                        images.push(
                            order
                                .iter()
                                .flat_map(|&o| reference[o * c..][..c].to_vec())
                                .collect(),
                        );
                    } else {
                        let other = style(&mut rng);
                        images.push(paint(&mut rng, &other));
                    }
                }
                record.choices = (0..n).map(letter).collect();
                record.ground_truth = letter(gt);
                images
                    .into_iter()
                    .map(|features| Image {
                        features,
                        extra: vec![],
                    })
                    .collect()
            }
            Task::OddOneOut => {
                let n = if k % 10 == 9 { 4 } else { 3 };
                let odd = rng.random_range(0..n);
                let base = normal(&mut rng, c);
                record.choices = (0..n).map(letter).collect();
                record.ground_truth = letter(odd);
                record.condition = Some(format!("cond{}", k % 2));
                (0..n)
                    .map(|i| {
                        let embedding: Vec<f32> = if i == odd {
                            normal(&mut rng, c)
                        } else {
                            base.iter().map(|&b| b + 0.1 * gauss(&mut rng)).collect()
                        };
                        let features = (0..n_cells)
                            .flat_map(|_| {
                                embedding
                                    .iter()
                                    .map(|&e| e + 0.1 * gauss(&mut rng))
                                    .collect::<Vec<_>>()
                            })
                            .collect();
                        Image {
                            features,
                            extra: vec![],
                        }
                    })
                    .collect()
            }
            _ => unreachable!(),
        };
        let transform = ImageTransform::identity(self.side(), self.side(), self.spec.patch_size)?;
        record.images = (0..images.len())
            .map(|i| ImageRef {
                id: format!("{sample_id}-img{i}"),
                transform: transform.clone(),
                dump: format!("dumps/{sample_id}-img{i}.vlmp").into(),
            })
            .collect();
        Ok((record, images))
    }

    fn archive(&self, sample_id: &str, index: usize, image: &Image) -> Result<TensorArchive> {
        let g = self.spec.grid;
        let c = self.spec.channels;
        let mut archive = TensorArchive::default();
        for (l, (name, sigma)) in self.spec.layers.iter().enumerate() {
            let mut rng = rng::stream(
                self.spec.seed,
                &[rng::key(sample_id), index as u64, l as u64, 1],
            );
            let values: Vec<f32> = image
                .features
                .iter()
                .map(|&v| {
                    if *sigma == 0.0 {
                        v
                    } else {
                        v + sigma * gauss(&mut rng)
                    }
                })
                .collect();
            archive.insert(name.clone(), Tensor::from_f32(vec![g, g, c], &values)?);
        }
        for (name, t) in &image.extra {
            archive.insert(name.clone(), t.clone());
        }
        archive.meta.insert("generator".into(), "synth".into());
        Ok(archive)
    }
}

/// Generates the samples and their dump archives in memory.
pub fn generate(spec: &SynthSpec) -> Result<Vec<(SampleRecord, Vec<TensorArchive>)>> {
    if spec.grid < 3 || spec.channels == 0 || spec.layers.is_empty() {
        return Err(Error::InvalidArgument(
            "synthetic data needs grid >= 3, channels >= 1 and a layer".into(),
        ));
    }
    let mut basis_rng = rng::stream(spec.seed, &[rng::key("depth-basis")]);
    let builder = Builder {
        spec,
        depth_basis: (
            normal(&mut basis_rng, spec.channels),
            normal(&mut basis_rng, spec.channels),
        ),
    };
    let mut out = Vec::new();
    for &task in &spec.tasks {
        for k in 0..spec.per_task {
            let (record, images) = builder.sample(task, k)?;
            let archives = images
                .iter()
                .enumerate()
                .map(|(i, img)| builder.archive(&record.sample_id, i, img))
                .collect::<Result<Vec<_>>>()?;
            out.push((record, archives));
        }
    }
    Ok(out)
}

/// Writes `manifest.jsonl` and `dumps/*.vlmp` under `dir`.
pub fn write_dataset(dir: &Path, spec: &SynthSpec) -> Result<Manifest> {
    let dumps = dir.join("dumps");
    std::fs::create_dir_all(&dumps).map_err(|e| Error::io(&dumps, e))?;
    let mut samples = Vec::new();
    for (record, archives) in generate(spec)? {
        for (img, archive) in record.images.iter().zip(&archives) {
            archive.save(dir.join(&img.dump))?;
        }
        samples.push(record);
    }
    let manifest = Manifest::new(dir, samples);
    manifest.save(dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

/// How a scripted model answers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Script {
    /// Always the ground truth.
    Oracle,
    /// Uniformly random letter from the sample's choices.
    Chance { seed: u64 },
    /// The same letter every time.
    Constant(char),
}

/// Phrasings cycled through so extraction sees varied text.
fn phrase(letter: char, k: usize) -> String {
    match k % 4 {
        0 => letter.to_string(),
        1 => format!("({letter})"),
        2 => format!("{letter}."),
        _ => format!("I think the answer is ({letter})."),
    }
}

/// One answer per sample from a scripted model. Blind and sighted answers
/// from the same script and seed are identical.
pub fn scripted_answers(
    manifest: &Manifest,
    model_id: &str,
    mode: AnswerMode,
    script: Script,
) -> Vec<AnswerRecord> {
    manifest
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let letter = match script {
                Script::Oracle => s.ground_truth,
                Script::Constant(l) => l,
                Script::Chance { seed } => {
                    let mut rng = rng::stream(seed, &[rng::key(&s.sample_id)]);
                    s.choices[rng.random_range(0..s.choices.len())]
                }
            };
            AnswerRecord {
                sample_id: s.sample_id.clone(),
                mode,
                raw_text: phrase(letter, k),
                model_id: model_id.to_string(),
                prompt_variant: PromptVariant::SingleImage,
                metadata: None,
            }
        })
        .collect()
}

/// Writes answers as JSON lines.
pub fn write_answers(path: &Path, answers: &[AnswerRecord]) -> Result<()> {
    let mut body = String::new();
    for a in answers {
        body.push_str(&serde_json::to_string(a).expect("answers serialize"));
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate_visual, VisualConfig};
    use crate::exec::Execution;
    use crate::manifest::validate_samples;

    #[test]
    fn planted_dataset_is_valid_and_solved() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), &SynthSpec::default()).unwrap();
        assert_eq!(m.samples.len(), 48);
        assert!(validate_samples(&m, Execution::Parallel).is_empty());
        let cfg = VisualConfig::default();
        let run = evaluate_visual(
            &m.filter_task(Task::DepthOrder),
            names::DEPTH_MAP,
            &cfg,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(run.accuracy(), 1.0);
        let layer = names::vision_patch(0);
        for task in [
            Task::SemanticCorrespondence,
            Task::ArtStyle,
            Task::OddOneOut,
        ] {
            let run =
                evaluate_visual(&m.filter_task(task), &layer, &cfg, Execution::Parallel).unwrap();
            assert_eq!(run.accuracy(), 1.0, "{task}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            per_task: 2,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        for ((ra, xa), (rb, xb)) in a.iter().zip(&b) {
            assert_eq!(ra, rb);
            for (p, q) in xa.iter().zip(xb) {
                assert_eq!(p.to_bytes().unwrap(), q.to_bytes().unwrap());
            }
        }
    }

    #[test]
    fn chance_script_uses_choices() {
        let m = Manifest::new(
            ".",
            generate(&SynthSpec::default())
                .unwrap()
                .into_iter()
                .map(|(r, _)| r)
                .collect(),
        );
        let ans = scripted_answers(&m, "stub", AnswerMode::Blind, Script::Chance { seed: 3 });
        for (a, s) in ans.iter().zip(&m.samples) {
            let l = crate::vqa::extract_for(s, &a.raw_text).unwrap();
            assert!(s.choices.contains(&l));
        }
    }
}
