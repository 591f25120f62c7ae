//! JSON-lines dataset manifest: a `{"schema_version": 1}` header line followed
//! by one [`SampleRecord`] per line. Dump paths are relative to the manifest's
//! directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::archive::TensorArchive;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{ImageTransform, PixelBox};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SemanticCorrespondence,
    LowLevelMatching,
    FunctionalCorrespondence,
    DepthOrder,
    ArtStyle,
    OddOneOut,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::SemanticCorrespondence,
        Task::LowLevelMatching,
        Task::FunctionalCorrespondence,
        Task::DepthOrder,
        Task::ArtStyle,
        Task::OddOneOut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::SemanticCorrespondence => "semantic_correspondence",
            Task::LowLevelMatching => "low_level_matching",
            Task::FunctionalCorrespondence => "functional_correspondence",
            Task::DepthOrder => "depth_order",
            Task::ArtStyle => "art_style",
            Task::OddOneOut => "odd_one_out",
        }
    }

    pub fn is_correspondence(self) -> bool {
        matches!(
            self,
            Task::SemanticCorrespondence | Task::LowLevelMatching | Task::FunctionalCorrespondence
        )
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRef {
    pub id: String,
    pub transform: ImageTransform,
    pub dump: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keypoints {
    #[serde(rename = "ref")]
    pub reference: [f64; 2],
    pub options: BTreeMap<char, [f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub sample_id: String,
    pub task: Task,
    pub images: Vec<ImageRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Keypoints>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<BTreeMap<char, [f64; 4]>>,
    pub choices: Vec<char>,
    pub ground_truth: char,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    /// Object names per option letter, used by the depth-order prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_names: Option<BTreeMap<char, String>>,
}

impl SampleRecord {
    pub fn ground_truth_index(&self) -> Option<usize> {
        self.choices.iter().position(|&c| c == self.ground_truth)
    }

    pub fn pixel_box(&self, letter: char) -> Option<PixelBox> {
        self.boxes
            .as_ref()?
            .get(&letter)
            .map(|b| PixelBox::new(b[0], b[1], b[2], b[3]))
    }

    /// Every structural invariant violated by this record (dump files are not touched).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.sample_id.is_empty() {
            out.push("empty sample_id".to_string());
        }
        if self.choices.len() < 2 {
            out.push(format!(
                "need at least 2 choices, got {}",
                self.choices.len()
            ));
        }
        let ordered = self
            .choices
            .iter()
            .enumerate()
            .all(|(i, &c)| i < 26 && c == (b'A' + i as u8) as char);
        if !ordered {
            out.push(format!(
                "choices {:?} are not consecutive letters from A",
                self.choices
            ));
        }
        if !self.choices.contains(&self.ground_truth) {
            out.push(format!(
                "ground_truth {} not among choices {:?}",
                self.ground_truth, self.choices
            ));
        }
        for (idx, image) in self.images.iter().enumerate() {
            if let Err(e) = image.transform.validate() {
                out.push(format!("image {idx} ({}): {e}", image.id));
            }
        }

        let n = self.choices.len();
        let expected_images = match self.task {
            t if t.is_correspondence() => 2,
            Task::DepthOrder => 1,
            Task::ArtStyle => n + 1,
            Task::OddOneOut => n,
            _ => unreachable!(),
        };
        if self.images.len() != expected_images {
            out.push(format!(
                "{} needs {expected_images} images, got {}",
                self.task,
                self.images.len()
            ));
        }
        if self.task == Task::OddOneOut && !(3..=4).contains(&n) {
            out.push(format!("odd_one_out needs 3 or 4 choices, got {n}"));
        }

        let letters: BTreeSet<char> = self.choices.iter().copied().collect();
        if self.task.is_correspondence() {
            match &self.keypoints {
                None => out.push("missing keypoints".to_string()),
                Some(kp) => {
                    if kp.options.keys().copied().collect::<BTreeSet<_>>() != letters {
                        out.push("keypoint options do not match choices".to_string());
                    }
                    if let Some(img) = self.images.first() {
                        check_point("ref keypoint", kp.reference, &img.transform, &mut out);
                    }
                    if let Some(img) = self.images.get(1) {
                        for (letter, pt) in &kp.options {
                            check_point(
                                &format!("keypoint {letter}"),
                                *pt,
                                &img.transform,
                                &mut out,
                            );
                        }
                    }
                }
            }
        }
        if self.task == Task::DepthOrder {
            if n != 2 {
                out.push(format!("depth_order needs exactly 2 choices, got {n}"));
            }
            match &self.boxes {
                None => out.push("missing boxes".to_string()),
                Some(boxes) => {
                    if boxes.keys().copied().collect::<BTreeSet<_>>() != letters {
                        out.push("boxes do not match choices".to_string());
                    }
                    if let Some(img) = self.images.first() {
                        for (letter, b) in boxes {
                            let pb = PixelBox::new(b[0], b[1], b[2], b[3]);
                            if !pb.within(img.transform.orig_w, img.transform.orig_h) {
                                out.push(format!("box {letter} {b:?} is empty or out of bounds"));
                            }
                        }
                    }
                }
            }
        }
        if let Some(names) = &self.object_names {
            if names.keys().any(|k| !letters.contains(k)) {
                out.push("object_names keyed by unknown letter".to_string());
            }
        }
        out
    }
}

fn check_point(what: &str, pt: [f64; 2], t: &ImageTransform, out: &mut Vec<String>) {
    if !(pt[0].is_finite() && pt[1].is_finite()) || !t.contains(pt[0], pt[1]) {
        out.push(format!(
            "{what} ({}, {}) outside {}x{} image",
            pt[0], pt[1], t.orig_w, t.orig_h
        ));
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    schema_version: u32,
}

/// A parsed manifest plus the directory dump paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub samples: Vec<SampleRecord>,
}

enum Line {
    Sample(Box<SampleRecord>),
    Bad { line: usize, message: String },
}

fn parse_lines(text: &str) -> std::result::Result<Vec<Line>, (usize, String)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or((1, "empty manifest".to_string()))?;
    let header: ManifestHeader =
        serde_json::from_str(header).map_err(|e| (hline + 1, format!("bad header line: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err((
            hline + 1,
            format!("unsupported schema_version {}", header.schema_version),
        ));
    }
    Ok(lines
        .map(|(i, l)| match serde_json::from_str::<SampleRecord>(l) {
            Ok(s) => Line::Sample(Box::new(s)),
            Err(e) => Line::Bad {
                line: i + 1,
                message: e.to_string(),
            },
        })
        .collect())
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, samples: Vec<SampleRecord>) -> Self {
        Manifest {
            root: root.into(),
            samples,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines = parse_lines(&text).map_err(|(line, message)| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        let mut samples = Vec::with_capacity(lines.len());
        for l in lines {
            match l {
                Line::Sample(s) => samples.push(*s),
                Line::Bad { line, message } => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message,
                    })
                }
            }
        }
        Ok(Manifest {
            root: parent_dir(path),
            samples,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&ManifestHeader {
            schema_version: SCHEMA_VERSION,
        })
        .expect("serializable");
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn dump_path(&self, sample: &SampleRecord, image: usize) -> Result<PathBuf> {
        let img = sample.images.get(image).ok_or_else(|| {
            Error::sample(&sample.sample_id, format!("no image at index {image}"))
        })?;
        Ok(self.root.join(&img.dump))
    }

    pub fn load_image(&self, sample: &SampleRecord, image: usize) -> Result<TensorArchive> {
        TensorArchive::load(self.dump_path(sample, image)?)
    }

    pub fn filter_task(&self, task: Task) -> Manifest {
        Manifest {
            root: self.root.clone(),
            samples: self
                .samples
                .iter()
                .filter(|s| s.task == task)
                .cloned()
                .collect(),
        }
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every record and every referenced dump. Only an unreadable or
/// header-less manifest is an error; everything else becomes a violation.
pub fn validate_dataset(path: impl AsRef<Path>, exec: Execution) -> Result<ValidationReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines = parse_lines(&text).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })?;
    let root = parent_dir(path);

    let total = lines.len();
    let mut violations = Vec::new();
    let mut samples = Vec::new();
    for l in lines {
        match l {
            Line::Sample(s) => samples.push(*s),
            Line::Bad { line, message } => violations.push(Violation {
                sample_id: format!("<line {line}>"),
                reason: message,
            }),
        }
    }
    let manifest = Manifest::new(root, samples);
    violations.extend(validate_samples(&manifest, exec));
    Ok(ValidationReport {
        samples: total,
        violations,
    })
}

/// Record and dump checks for an already-parsed manifest.
pub fn validate_samples(manifest: &Manifest, exec: Execution) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for s in &manifest.samples {
        if !seen.insert(s.sample_id.as_str()) {
            out.push(Violation {
                sample_id: s.sample_id.clone(),
                reason: "duplicate sample_id".to_string(),
            });
        }
    }
    let per_sample = exec.map(&manifest.samples, |s| {
        let mut reasons = s.violations();
        for (idx, img) in s.images.iter().enumerate() {
            let path = manifest.root.join(&img.dump);
            match std::fs::read(&path) {
                Err(e) => reasons.push(format!("image {idx}: cannot read {}: {e}", path.display())),
                Ok(bytes) => {
                    if let Err(e) = crate::archive::read_archive(&bytes) {
                        reasons.push(format!("image {idx}: {} [{}]", e, e.code()));
                    }
                }
            }
        }
        reasons
            .into_iter()
            .map(|reason| Violation {
                sample_id: s.sample_id.clone(),
                reason,
            })
            .collect::<Vec<_>>()
    });
    out.extend(per_sample.into_iter().flatten());
    out
}
