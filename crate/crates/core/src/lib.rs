//! Evaluation engine that scores vision encoders and vision-language models on
//! the same vision-centric tasks through two readouts: direct probing of dumped
//! features, and VQA-style answer scoring. The gap between the two is reported
//! as accuracy drops, encoder rank shifts, blind-answer bias and layer curves.
//!
//! Data enters the engine as VLMP1 tensor archives (see [`archive`]) referenced
//! from a JSON-lines [`manifest`], plus JSON-lines answer files for the VQA side.

pub mod archive;
pub mod error;
pub mod eval;
pub mod exec;
pub mod geometry;
pub mod manifest;
pub mod probes;
pub mod readout;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod vqa;

pub use archive::{read_archive, write_archive, DType, Tensor, TensorArchive};
pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{ImageTransform, PatchGrid};
pub use manifest::{Manifest, SampleRecord, Task};
pub use readout::Prediction;
