//! `vlmprobe`: batch front end for the evaluation engine.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "vlmprobe",
    version,
    about = "Visual readouts and VQA scoring for vision encoders and VLMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand that are not part of the run's config.
#[derive(Args, Debug)]
struct Runtime {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true, env = "VLMPROBE_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a manifest and the dumps it references.
    Validate(ValidateFlags),
    /// Run the visual readout for each sample at one layer.
    EvalVisual(EvalVisualFlags),
    /// Score VLM answers against ground truth.
    EvalVqa(EvalVqaFlags),
    /// Compare sighted and blind answer distributions.
    BlindCompare(BlindCompareFlags),
    /// Visual readout accuracy across a list of layers.
    ProbeLayers(ProbeLayersFlags),
    /// Few-shot logistic odd-one-out on image embeddings.
    FewShot(FewShotFlags),
    /// Fit a linear depth probe on one layer.
    FitDepthProbe(FitDepthProbeFlags),
    /// Chance accuracy of uniform guessing.
    Chance(ChanceFlags),
    /// Merge result fragments into report tables.
    Report(ReportFlags),
    /// Attention-map difference between two dumps.
    AttentionDiff(AttentionDiffFlags),
}

#[derive(Args, Debug, Serialize)]
pub struct ValidateFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalVisualFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Restrict to one task.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<String>,
    /// Tensor name to read from each dump.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layer: Option<String>,
    /// Model label used in the report.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Bootstrap resamples for the accuracy interval (0 disables it).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    /// `patch_count` or `none`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gram_normalization: Option<String>,
    /// Probe archive from `fit-depth-probe`, applied to depth samples.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_probe: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalVqaFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Answers JSON-lines file(s).
    #[arg(long, num_args = 1..)]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    answers: Vec<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<String>,
    /// `sighted` or `blind`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    /// Report strategy, e.g. `finetuned_llm`; defaults from the mode.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    strategy: Option<String>,
    /// Model label; defaults to the answers' `model_id`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct BlindCompareFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Answers file(s) holding both sighted and blind records.
    #[arg(long, num_args = 1..)]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    answers: Vec<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct ProbeLayersFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Layer tensor names, in plotting order.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    layers: Vec<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gram_normalization: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct FewShotFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Embedding tensor, e.g. `vision.cls.layer23`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layer: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials_per_point: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct FitDepthProbeFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layer: Option<String>,
    /// Ridge penalty.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct ChanceFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    /// `report_inputs.json` files or run directories containing one.
    #[arg(long, num_args = 1..)]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct AttentionDiffFlags {
    #[command(flatten)]
    #[serde(skip)]
    runtime: Runtime,
    /// Dump holding attention before fine-tuning.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    before: Option<PathBuf>,
    /// Dump holding attention after fine-tuning.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    after: Option<PathBuf>,
    /// Tensor name, e.g. `llm.attn.layer12`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tensor: Option<String>,
    /// First image-token key position.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    image_start: Option<usize>,
    /// One past the last image-token key position.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    image_end: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

fn dispatch(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Validate(f) => commands::validate(&f.runtime, &f),
        Command::EvalVisual(f) => commands::eval_visual(&f.runtime, &f),
        Command::EvalVqa(f) => commands::eval_vqa(&f.runtime, &f),
        Command::BlindCompare(f) => commands::blind_compare(&f.runtime, &f),
        Command::ProbeLayers(f) => commands::probe_layers(&f.runtime, &f),
        Command::FewShot(f) => commands::few_shot(&f.runtime, &f),
        Command::FitDepthProbe(f) => commands::fit_depth_probe(&f.runtime, &f),
        Command::Chance(f) => commands::chance(&f.runtime, &f),
        Command::Report(f) => commands::report(&f.runtime, &f),
        Command::AttentionDiff(f) => commands::attention_diff(&f.runtime, &f),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Usage(_) => {
                    eprintln!("run `vlmprobe help` for usage");
                    ExitCode::from(2)
                }
                CliError::Failure(_) => ExitCode::from(1),
            }
        }
    }
}
