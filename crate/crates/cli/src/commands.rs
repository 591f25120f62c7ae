//! Subcommand implementations. Each resolves its config, runs the engine and
//! writes its artifacts plus a `run.json` echo under the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use vlmprobe_core::eval::{evaluate_visual, VisualConfig};
use vlmprobe_core::exec::{configure_threads, Execution};
use vlmprobe_core::manifest::validate_dataset;
use vlmprobe_core::probes::{
    depth_training_rows, few_shot_evaluate, fit_ridge, fit_summary, layer_sweep,
    trials_from_manifest, FewShotConfig, LinearProbe,
};
use vlmprobe_core::readout::GramNormalization;
use vlmprobe_core::report::{
    blind_inputs, build_report, to_json, visual_cells, vqa_inputs, Bootstrap, Cell, LayerCurve,
    ReportInputs, Strategy,
};
use vlmprobe_core::stats::{accuracy_ci, attention_diff as diff_maps, chance_level};
use vlmprobe_core::vqa::{load_answers, score_vqa, AnswerMode, AnswerRecord};
use vlmprobe_core::{Manifest, Task, TensorArchive};

use crate::config::{resolve, usage, CliResult};
use crate::{
    AttentionDiffFlags, BlindCompareFlags, ChanceFlags, EvalVisualFlags, EvalVqaFlags,
    FewShotFlags, FitDepthProbeFlags, ProbeLayersFlags, ReportFlags, Runtime, ValidateFlags,
};

const INPUTS_FILE: &str = "report_inputs.json";

fn default_model() -> String {
    "model".into()
}

fn default_bootstrap() -> usize {
    1000
}

fn default_alpha() -> f64 {
    0.05
}

fn execution(rt: &Runtime) -> Execution {
    match rt.jobs {
        Some(1) => Execution::Sequential,
        Some(n) => {
            configure_threads(n);
            Execution::Parallel
        }
        None => Execution::Parallel,
    }
}

fn prepare_out(out: &Path, command: &str, cfg: &impl Serialize) -> CliResult<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    #[derive(Serialize)]
    struct RunEcho<'a, C> {
        command: &'a str,
        config: &'a C,
    }
    write(
        &out.join("run.json"),
        &to_json(&RunEcho {
            command,
            config: cfg,
        }),
    )
}

fn write(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    let mut body = String::new();
    for item in items {
        body.push_str(&serde_json::to_string(item)?);
        body.push('\n');
    }
    write(path, &body)
}

fn load_manifest(path: &Path, task: Option<Task>) -> CliResult<Manifest> {
    let m = Manifest::load(path)?;
    let m = match task {
        Some(t) => m.filter_task(t),
        None => m,
    };
    if m.samples.is_empty() {
        return Err(anyhow::anyhow!("no samples selected from {}", path.display()).into());
    }
    Ok(m)
}

fn tasks_of(m: &Manifest) -> Vec<Task> {
    m.samples
        .iter()
        .map(|s| s.task)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Bootstrap settings shared by the accuracy-producing commands.
fn check_bootstrap(bootstrap: usize, alpha: f64, seed: Option<u64>) -> CliResult<()> {
    if bootstrap > 0 && seed.is_none() {
        return Err(usage("--seed is required when --bootstrap is non-zero"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("--alpha must be in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn bootstrap(resamples: usize, alpha: f64, seed: Option<u64>) -> Option<Bootstrap> {
    seed.map(|seed| Bootstrap {
        resamples,
        alpha,
        seed,
    })
}

fn rate(n: usize, total: usize) -> f64 {
    n as f64 / total as f64
}

// validate

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateConfig {
    manifest: PathBuf,
    #[serde(default)]
    out: Option<PathBuf>,
}

pub fn validate(rt: &Runtime, flags: &ValidateFlags) -> CliResult<bool> {
    let cfg: ValidateConfig = resolve(rt.config.as_ref(), flags)?;
    let report = validate_dataset(&cfg.manifest, execution(rt))?;
    for v in &report.violations {
        eprintln!("{}: {}", v.sample_id, v.reason);
    }
    println!(
        "{} samples, {} violations",
        report.samples,
        report.violations.len()
    );
    if let Some(out) = &cfg.out {
        prepare_out(out, "validate", &cfg)?;
        write(&out.join("validation.json"), &to_json(&report))?;
    }
    Ok(report.is_clean())
}

// eval-visual

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalVisualConfig {
    manifest: PathBuf,
    out: PathBuf,
    layer: String,
    #[serde(default)]
    task: Option<Task>,
    #[serde(default = "default_model")]
    model: String,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default = "default_bootstrap")]
    bootstrap: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default)]
    gram_normalization: GramNormalization,
    #[serde(default)]
    depth_probe: Option<PathBuf>,
}

pub fn eval_visual(rt: &Runtime, flags: &EvalVisualFlags) -> CliResult<bool> {
    let cfg: EvalVisualConfig = resolve(rt.config.as_ref(), flags)?;
    check_bootstrap(cfg.bootstrap, cfg.alpha, cfg.seed)?;
    let exec = execution(rt);
    let manifest = load_manifest(&cfg.manifest, cfg.task)?;
    let depth_probe = match &cfg.depth_probe {
        Some(p) => Some(LinearProbe::from_archive(&TensorArchive::load(p)?)?),
        None => None,
    };
    let visual = VisualConfig {
        gram: cfg.gram_normalization,
        depth_probe,
    };
    prepare_out(&cfg.out, "eval-visual", &cfg)?;
    let run = evaluate_visual(&manifest, &cfg.layer, &visual, exec)?;

    let cells = visual_cells(
        &run,
        &cfg.model,
        &Strategy::Visual,
        bootstrap(cfg.bootstrap, cfg.alpha, cfg.seed),
        exec,
    )?;
    for c in &cells {
        println!(
            "{} {} {}: accuracy {:.3} (n={})",
            c.task, c.model, cfg.layer, c.accuracy, c.n
        );
    }
    write_jsonl(&cfg.out.join("predictions.jsonl"), &run.outcomes)?;
    write(&cfg.out.join("result.json"), &to_json(&cells))?;
    ReportInputs {
        cells,
        ..Default::default()
    }
    .save(cfg.out.join(INPUTS_FILE))?;
    Ok(true)
}

// eval-vqa

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalVqaConfig {
    manifest: PathBuf,
    out: PathBuf,
    answers: Vec<PathBuf>,
    #[serde(default)]
    task: Option<Task>,
    #[serde(default = "default_mode")]
    mode: AnswerMode,
    #[serde(default)]
    strategy: Option<Strategy>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default = "default_bootstrap")]
    bootstrap: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
}

fn default_mode() -> AnswerMode {
    AnswerMode::Sighted
}

/// Loads answer files and keeps the records for samples in `selected`.
/// Records naming samples absent from the full manifest are kept so scoring
/// reports them.
fn load_selected_answers(
    paths: &[PathBuf],
    full: &Manifest,
    selected: &Manifest,
) -> CliResult<Vec<AnswerRecord>> {
    if paths.is_empty() {
        return Err(usage("missing required option --answers"));
    }
    let mut all = Vec::new();
    for p in paths {
        all.extend(load_answers(p)?);
    }
    Ok(all
        .into_iter()
        .filter(|a| full.get(&a.sample_id).is_none() || selected.get(&a.sample_id).is_some())
        .collect())
}

pub fn eval_vqa(rt: &Runtime, flags: &EvalVqaFlags) -> CliResult<bool> {
    let cfg: EvalVqaConfig = resolve(rt.config.as_ref(), flags)?;
    check_bootstrap(cfg.bootstrap, cfg.alpha, cfg.seed)?;
    let exec = execution(rt);
    let full = load_manifest(&cfg.manifest, None)?;
    let manifest = load_manifest(&cfg.manifest, cfg.task)?;
    let answers = load_selected_answers(&cfg.answers, &full, &manifest)?;
    prepare_out(&cfg.out, "eval-vqa", &cfg)?;
    let score = score_vqa(&manifest, &answers, cfg.mode, exec)?;
    let model = cfg.model.clone().unwrap_or_else(|| score.model_id.clone());
    let strategy = cfg.strategy.clone().unwrap_or(match cfg.mode {
        AnswerMode::Sighted => Strategy::Vlm,
        AnswerMode::Blind => Strategy::VlmBlind,
    });

    let inputs = vqa_inputs(
        &score,
        &model,
        &strategy,
        bootstrap(cfg.bootstrap, cfg.alpha, cfg.seed),
        exec,
    )?;
    for c in &inputs.cells {
        println!(
            "{} {} {}: accuracy {:.3}, invalid {:.3} (n={})",
            c.task, c.model, c.strategy, c.accuracy, c.invalid_rate, c.n
        );
    }
    write_jsonl(&cfg.out.join("predictions.jsonl"), &score.outcomes)?;
    write(&cfg.out.join("result.json"), &to_json(&inputs.cells))?;
    inputs.save(cfg.out.join(INPUTS_FILE))?;
    Ok(true)
}

// blind-compare

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlindCompareConfig {
    manifest: PathBuf,
    out: PathBuf,
    answers: Vec<PathBuf>,
    #[serde(default)]
    task: Option<Task>,
    #[serde(default)]
    model: Option<String>,
}

pub fn blind_compare(rt: &Runtime, flags: &BlindCompareFlags) -> CliResult<bool> {
    let cfg: BlindCompareConfig = resolve(rt.config.as_ref(), flags)?;
    let exec = execution(rt);
    let full = load_manifest(&cfg.manifest, None)?;
    let manifest = load_manifest(&cfg.manifest, cfg.task)?;
    let answers = load_selected_answers(&cfg.answers, &full, &manifest)?;
    prepare_out(&cfg.out, "blind-compare", &cfg)?;
    let (per_task, inputs) = blind_inputs(&manifest, &answers, cfg.model.as_deref(), exec)?;
    for (task, c) in &per_task {
        println!(
            "{task} {}: TV sighted/blind {:.3}, sighted/gt {:.3}, blind/gt {:.3} (invalid kept)",
            c.sighted.model_id,
            c.tv_with_invalid.sighted_blind,
            c.tv_with_invalid.sighted_gt,
            c.tv_with_invalid.blind_gt
        );
    }
    write(&cfg.out.join("comparison.json"), &to_json(&per_task))?;
    inputs.save(cfg.out.join(INPUTS_FILE))?;
    Ok(true)
}

// probe-layers

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeLayersConfig {
    manifest: PathBuf,
    out: PathBuf,
    layers: Vec<String>,
    #[serde(default)]
    task: Option<Task>,
    #[serde(default = "default_model")]
    model: String,
    #[serde(default)]
    gram_normalization: GramNormalization,
}

pub fn probe_layers(rt: &Runtime, flags: &ProbeLayersFlags) -> CliResult<bool> {
    let cfg: ProbeLayersConfig = resolve(rt.config.as_ref(), flags)?;
    if cfg.layers.is_empty() {
        return Err(usage("missing required option --layers"));
    }
    let exec = execution(rt);
    let manifest = load_manifest(&cfg.manifest, cfg.task)?;
    prepare_out(&cfg.out, "probe-layers", &cfg)?;
    let visual = VisualConfig {
        gram: cfg.gram_normalization,
        depth_probe: None,
    };
    let mut curves = Vec::new();
    for task in tasks_of(&manifest) {
        let points = layer_sweep(&manifest.filter_task(task), &cfg.layers, &visual, exec)?;
        for p in &points {
            println!("{task} {}: accuracy {:.3}", p.layer, p.accuracy);
        }
        curves.push(LayerCurve {
            task,
            model: cfg.model.clone(),
            points,
        });
    }
    write(&cfg.out.join("layers.json"), &to_json(&curves))?;
    ReportInputs {
        layer_curves: curves,
        ..Default::default()
    }
    .save(cfg.out.join(INPUTS_FILE))?;
    Ok(true)
}

// few-shot

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FewShotRunConfig {
    manifest: PathBuf,
    out: PathBuf,
    layer: String,
    seed: u64,
    #[serde(default = "default_model")]
    model: String,
    #[serde(default = "defaults::lr")]
    lr: f64,
    #[serde(default = "defaults::epochs")]
    epochs: usize,
    #[serde(default = "defaults::trials_per_point")]
    trials_per_point: usize,
    #[serde(default = "defaults::train_fraction")]
    train_fraction: f64,
    #[serde(default = "default_bootstrap")]
    bootstrap: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
}

mod defaults {
    use super::FewShotConfig;

    pub fn lr() -> f64 {
        FewShotConfig::default().lr
    }

    pub fn epochs() -> usize {
        FewShotConfig::default().epochs
    }

    pub fn trials_per_point() -> usize {
        FewShotConfig::default().trials_per_point
    }

    pub fn train_fraction() -> f64 {
        FewShotConfig::default().train_fraction
    }
}

pub fn few_shot(rt: &Runtime, flags: &FewShotFlags) -> CliResult<bool> {
    let cfg: FewShotRunConfig = resolve(rt.config.as_ref(), flags)?;
    check_bootstrap(cfg.bootstrap, cfg.alpha, Some(cfg.seed))?;
    let exec = execution(rt);
    let manifest = load_manifest(&cfg.manifest, Some(Task::OddOneOut))?;
    prepare_out(&cfg.out, "few-shot", &cfg)?;
    let trials = trials_from_manifest(&manifest, &cfg.layer, exec)?;
    let fs = FewShotConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        trials_per_point: cfg.trials_per_point,
        train_fraction: cfg.train_fraction,
        seed: cfg.seed,
    };
    let summary = few_shot_evaluate(&trials, &fs, exec)?;
    let correct: Vec<bool> = summary
        .outcomes
        .iter()
        .zip(&manifest.samples)
        .map(|(o, s)| o.prediction.is_correct(s.ground_truth))
        .collect();
    let n = correct.len();
    let cell = Cell {
        task: Task::OddOneOut,
        model: cfg.model.clone(),
        strategy: Strategy::VisualFewShot,
        n,
        accuracy: summary.accuracy,
        ci: match bootstrap(cfg.bootstrap, cfg.alpha, Some(cfg.seed)) {
            Some(b) if b.resamples > 0 => {
                Some(accuracy_ci(&correct, b.resamples, b.alpha, b.seed, exec)?)
            }
            _ => None,
        },
        tie_rate: Some(rate(
            summary.outcomes.iter().filter(|o| o.prediction.tie).count(),
            n,
        )),
        invalid_rate: rate(
            summary
                .outcomes
                .iter()
                .filter(|o| !o.prediction.valid)
                .count(),
            n,
        ),
    };
    println!(
        "odd_one_out {} few-shot: accuracy {:.3}, mean repetition accuracy {:.3} (n={n})",
        cfg.model, summary.accuracy, summary.mean_repetition_accuracy
    );
    write_jsonl(&cfg.out.join("predictions.jsonl"), &summary.outcomes)?;
    write(&cfg.out.join("result.json"), &to_json(&summary))?;
    ReportInputs {
        cells: vec![cell],
        ..Default::default()
    }
    .save(cfg.out.join(INPUTS_FILE))?;
    Ok(true)
}

// fit-depth-probe

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitDepthProbeConfig {
    manifest: PathBuf,
    out: PathBuf,
    layer: String,
    #[serde(default = "default_lambda")]
    lambda: f64,
}

fn default_lambda() -> f64 {
    1e-3
}

pub fn fit_depth_probe(rt: &Runtime, flags: &FitDepthProbeFlags) -> CliResult<bool> {
    let cfg: FitDepthProbeConfig = resolve(rt.config.as_ref(), flags)?;
    if cfg.lambda.is_nan() || cfg.lambda < 0.0 {
        return Err(usage(format!(
            "--lambda must be non-negative, got {}",
            cfg.lambda
        )));
    }
    let manifest = load_manifest(&cfg.manifest, Some(Task::DepthOrder))?;
    prepare_out(&cfg.out, "fit-depth-probe", &cfg)?;
    let (features, channels, targets) = depth_training_rows(&manifest, &cfg.layer)?;
    let probe = fit_ridge(&features, channels, &targets, cfg.lambda)?;
    let summary = fit_summary(&probe, &features, &targets);
    probe
        .to_archive(&cfg.layer)?
        .save(cfg.out.join("probe.vlmp"))?;
    write(&cfg.out.join("fit.json"), &to_json(&summary))?;
    println!(
        "depth probe on {}: {} rows, {} channels",
        cfg.layer,
        targets.len(),
        channels
    );
    Ok(true)
}

// chance

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChanceConfig {
    manifest: PathBuf,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    task: Option<Task>,
}

#[derive(Serialize)]
struct ChanceResult {
    overall: f64,
    samples: usize,
    per_task: BTreeMap<Task, f64>,
}

pub fn chance(rt: &Runtime, flags: &ChanceFlags) -> CliResult<bool> {
    let cfg: ChanceConfig = resolve(rt.config.as_ref(), flags)?;
    let manifest = load_manifest(&cfg.manifest, cfg.task)?;
    let mut per_task = BTreeMap::new();
    for task in tasks_of(&manifest) {
        per_task.insert(task, chance_level(&manifest.filter_task(task).samples)?);
    }
    let result = ChanceResult {
        overall: chance_level(&manifest.samples)?,
        samples: manifest.samples.len(),
        per_task,
    };
    println!(
        "chance {:.4} over {} samples",
        result.overall, result.samples
    );
    for (t, c) in &result.per_task {
        println!("  {t}: {c:.4}");
    }
    if let Some(out) = &cfg.out {
        prepare_out(out, "chance", &cfg)?;
        write(&out.join("chance.json"), &to_json(&result))?;
    }
    Ok(true)
}

// report

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportConfig {
    inputs: Vec<PathBuf>,
    out: PathBuf,
}

pub fn report(rt: &Runtime, flags: &ReportFlags) -> CliResult<bool> {
    let cfg: ReportConfig = resolve(rt.config.as_ref(), flags)?;
    if cfg.inputs.is_empty() {
        return Err(usage("missing required option --inputs"));
    }
    let mut merged = ReportInputs::default();
    for p in &cfg.inputs {
        let file = if p.is_dir() {
            p.join(INPUTS_FILE)
        } else {
            p.clone()
        };
        merged.extend(ReportInputs::load(&file)?);
    }
    let report = build_report(merged)?;
    prepare_out(&cfg.out, "report", &cfg)?;
    report.write_to(&cfg.out)?;
    println!(
        "report: {} cells, {} rank tables, written to {}",
        report.cells.len(),
        report.rank_tables.len(),
        cfg.out.display()
    );
    Ok(true)
}

// attention-diff

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttentionDiffConfig {
    before: PathBuf,
    after: PathBuf,
    tensor: String,
    image_start: usize,
    image_end: usize,
    out: PathBuf,
}

#[derive(Serialize)]
struct AttentionSummary {
    tensor: String,
    heads: usize,
    queries: usize,
    keys: usize,
    image_start: usize,
    image_end: usize,
    /// Per query, per image token.
    saliency: Vec<Vec<f64>>,
    column_peak: Vec<f64>,
}

pub fn attention_diff(rt: &Runtime, flags: &AttentionDiffFlags) -> CliResult<bool> {
    let cfg: AttentionDiffConfig = resolve(rt.config.as_ref(), flags)?;
    if cfg.image_start >= cfg.image_end {
        return Err(usage("--image-start must be below --image-end"));
    }
    let before = TensorArchive::load(&cfg.before)?;
    let after = TensorArchive::load(&cfg.after)?;
    let d = diff_maps(
        before.get(&cfg.tensor)?,
        after.get(&cfg.tensor)?,
        cfg.image_start..cfg.image_end,
    )?;
    prepare_out(&cfg.out, "attention-diff", &cfg)?;
    let n_img = d.image_tokens.len();
    let summary = AttentionSummary {
        tensor: cfg.tensor.clone(),
        heads: d.heads,
        queries: d.queries,
        keys: d.keys,
        image_start: cfg.image_start,
        image_end: cfg.image_end,
        saliency: d.saliency.chunks(n_img).map(<[f64]>::to_vec).collect(),
        column_peak: d.column_peak(),
    };
    let mut csv = String::from("x,y\n");
    for (i, v) in summary.column_peak.iter().enumerate() {
        csv.push_str(&format!("{},{v:.6}\n", cfg.image_start + i));
    }
    write(&cfg.out.join("attention.json"), &to_json(&summary))?;
    write(&cfg.out.join("saliency.csv"), &csv)?;
    println!(
        "{}: {} heads, {} queries, {} image tokens",
        cfg.tensor, d.heads, d.queries, n_img
    );
    Ok(true)
}
