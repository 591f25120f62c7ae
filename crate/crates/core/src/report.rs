//! Report assembly: merges result fragments into one deterministic report and
//! renders JSON, CSV tables, a markdown summary and plot-data series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::VisualRun;
use crate::exec::Execution;
use crate::manifest::{Manifest, Task};
use crate::probes::LayerPoint;
use crate::stats::{
    accuracy_ci, rank_compare, tv_distance, AnswerDistribution, ConfidenceInterval, RankComparison,
    TvMode,
};
use crate::vqa::{blind_compare, AnswerRecord, BlindComparison, VqaScore};

pub const REPORT_SCHEMA: u32 = 1;

/// Column order of the results matrix.
pub const TABLE_ORDER: [Task; 6] = [
    Task::SemanticCorrespondence,
    Task::LowLevelMatching,
    Task::DepthOrder,
    Task::FunctionalCorrespondence,
    Task::ArtStyle,
    Task::OddOneOut,
];

/// How an accuracy was obtained.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Visual,
    /// Few-shot logistic readout on visual embeddings.
    VisualFewShot,
    Vlm,
    VlmBlind,
    /// `finetuned_<component>`, e.g. `finetuned_llm`.
    Finetuned(String),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Visual => f.write_str("visual"),
            Strategy::VisualFewShot => f.write_str("visual_few_shot"),
            Strategy::Vlm => f.write_str("vlm"),
            Strategy::VlmBlind => f.write_str("vlm_blind"),
            Strategy::Finetuned(c) => write!(f, "finetuned_{c}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual" => Ok(Strategy::Visual),
            "visual_few_shot" => Ok(Strategy::VisualFewShot),
            "vlm" => Ok(Strategy::Vlm),
            "vlm_blind" => Ok(Strategy::VlmBlind),
            _ => match s.strip_prefix("finetuned_") {
                Some(c)
                    if !c.is_empty()
                        && c.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_') =>
                {
                    Ok(Strategy::Finetuned(c.to_string()))
                }
                _ => Err(Error::InvalidArgument(format!("unknown strategy `{s}`"))),
            },
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

/// Accuracy of one model under one strategy on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub task: Task,
    pub model: String,
    pub strategy: Strategy,
    pub n: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceInterval>,
    /// Only meaningful for visual readouts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_rate: Option<f64>,
    pub invalid_rate: f64,
}

impl Cell {
    fn key(&self) -> (Task, &str, &Strategy) {
        (self.task, &self.model, &self.strategy)
    }

    fn check(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let ci_ok = self
            .ci
            .is_none_or(|c| c.lo <= c.point && c.point <= c.hi && unit(c.lo) && unit(c.hi));
        if !unit(self.accuracy)
            || !unit(self.invalid_rate)
            || !self.tie_rate.is_none_or(unit)
            || !ci_ok
        {
            return Err(Error::InvalidArgument(format!(
                "cell {}/{}/{} has out-of-range values",
                self.task, self.model, self.strategy
            )));
        }
        Ok(())
    }
}

/// TV distance from one answer source to a reference distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvRow {
    pub task: Task,
    pub model: String,
    /// `original`, `blind`, or a fine-tuned variant name.
    pub row: String,
    /// `gt` for the ground-truth distribution, otherwise another row label.
    pub reference: String,
    pub mode: TvMode,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCurve {
    pub task: Task,
    pub model: String,
    pub points: Vec<LayerPoint>,
}

/// An answer distribution for the bar plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionRow {
    pub task: Task,
    pub model: String,
    /// `sighted`, `blind` or `gt`.
    pub source: String,
    pub distribution: AnswerDistribution,
}

/// A fragment of results. Subcommands emit these; `build_report` merges them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportInputs {
    #[serde(default)]
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub tv_rows: Vec<TvRow>,
    #[serde(default)]
    pub layer_curves: Vec<LayerCurve>,
    #[serde(default)]
    pub distributions: Vec<DistributionRow>,
}

impl ReportInputs {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &to_json(self))
    }

    pub fn extend(&mut self, other: ReportInputs) {
        self.cells.extend(other.cells);
        self.tv_rows.extend(other.tv_rows);
        self.layer_curves.extend(other.layer_curves);
        self.distributions.extend(other.distributions);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub task: Task,
    pub scores_visual: BTreeMap<String, f64>,
    pub scores_vlm: BTreeMap<String, f64>,
    /// Visual ranks are `ranks_a`, VLM ranks `ranks_b`.
    pub comparison: RankComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub report_schema: u32,
    pub cells: Vec<Cell>,
    pub tv_rows: Vec<TvRow>,
    pub layer_curves: Vec<LayerCurve>,
    pub distributions: Vec<DistributionRow>,
    pub rank_tables: Vec<RankTable>,
}

/// Sorts by key and drops exact duplicates; differing values under one key are an error.
fn dedup<T: PartialEq, K: Ord + fmt::Debug>(
    mut items: Vec<T>,
    key: impl Fn(&T) -> K,
) -> Result<Vec<T>> {
    items.sort_by_key(&key);
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for item in items {
        if let Some(last) = out.last() {
            if key(last) == key(&item) {
                if *last != item {
                    return Err(Error::ConflictingCell(format!("{:?}", key(&item))));
                }
                continue;
            }
        }
        out.push(item);
    }
    Ok(out)
}

fn table_pos(t: Task) -> usize {
    TABLE_ORDER
        .iter()
        .position(|&x| x == t)
        .unwrap_or(usize::MAX)
}

fn mode_name(m: TvMode) -> &'static str {
    match m {
        TvMode::LettersOnly => "letters_only",
        TvMode::WithInvalid => "with_invalid",
    }
}

type Scores = BTreeMap<String, f64>;

/// Visual-vs-VLM rank tables for every task with at least two models scored both ways.
pub fn rank_tables(cells: &[Cell]) -> Result<Vec<RankTable>> {
    let mut per_task: BTreeMap<usize, (Scores, Scores)> = BTreeMap::new();
    for c in cells {
        let entry = per_task.entry(table_pos(c.task)).or_default();
        match c.strategy {
            Strategy::Visual => entry.0.insert(c.model.clone(), c.accuracy),
            Strategy::Vlm => entry.1.insert(c.model.clone(), c.accuracy),
            _ => None,
        };
    }
    let mut out = Vec::new();
    for (pos, (visual, vlm)) in per_task {
        let shared: BTreeSet<&String> = visual.keys().filter(|k| vlm.contains_key(*k)).collect();
        if shared.len() < 2 {
            continue;
        }
        let pick = |m: &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
            m.iter()
                .filter(|(k, _)| shared.contains(k))
                .map(|(k, v)| (k.clone(), *v))
                .collect()
        };
        let (scores_visual, scores_vlm) = (pick(&visual), pick(&vlm));
        out.push(RankTable {
            task: TABLE_ORDER[pos],
            comparison: rank_compare(&scores_visual, &scores_vlm)?,
            scores_visual,
            scores_vlm,
        });
    }
    Ok(out)
}

/// Merges inputs into a canonical report. Ordering is fixed so identical
/// inputs in any order yield identical output.
pub fn build_report(inputs: ReportInputs) -> Result<EvalReport> {
    if inputs.cells.is_empty() && inputs.tv_rows.is_empty() && inputs.layer_curves.is_empty() {
        return Err(Error::Empty("report inputs"));
    }
    for c in &inputs.cells {
        c.check()?;
    }
    let cells = dedup(inputs.cells, |c| {
        let (t, m, s) = c.key();
        (table_pos(t), m.to_string(), s.clone())
    })?;
    let tv_rows = dedup(inputs.tv_rows, |r| {
        (
            table_pos(r.task),
            r.model.clone(),
            r.row.clone(),
            r.reference.clone(),
            mode_name(r.mode),
        )
    })?;
    let layer_curves = dedup(inputs.layer_curves, |c| {
        (table_pos(c.task), c.model.clone())
    })?;
    let distributions = dedup(inputs.distributions, |d| {
        (table_pos(d.task), d.model.clone(), d.source.clone())
    })?;
    Ok(EvalReport {
        report_schema: REPORT_SCHEMA,
        rank_tables: rank_tables(&cells)?,
        cells,
        tv_rows,
        layer_curves,
        distributions,
    })
}

/// Bootstrap settings for cell confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bootstrap {
    pub resamples: usize,
    pub alpha: f64,
    pub seed: u64,
}

fn interval(
    correct: &[bool],
    bootstrap: Option<Bootstrap>,
    exec: Execution,
) -> Result<Option<ConfidenceInterval>> {
    match bootstrap {
        Some(b) if b.resamples > 0 => Ok(Some(accuracy_ci(
            correct,
            b.resamples,
            b.alpha,
            b.seed,
            exec,
        )?)),
        _ => Ok(None),
    }
}

fn rate(n: usize, total: usize) -> f64 {
    n as f64 / total as f64
}

fn tasks_in(tasks: impl Iterator<Item = Task>) -> Vec<Task> {
    let set: BTreeSet<Task> = tasks.collect();
    let mut out: Vec<Task> = set.into_iter().collect();
    out.sort_by_key(|&t| table_pos(t));
    out
}

/// One visual cell per task present in the run.
pub fn visual_cells(
    run: &VisualRun,
    model: &str,
    strategy: &Strategy,
    bootstrap: Option<Bootstrap>,
    exec: Execution,
) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for task in tasks_in(run.outcomes.iter().map(|o| o.task)) {
        let outcomes: Vec<_> = run.outcomes.iter().filter(|o| o.task == task).collect();
        let n = outcomes.len();
        let correct: Vec<bool> = outcomes.iter().map(|o| o.correct).collect();
        cells.push(Cell {
            task,
            model: model.to_string(),
            strategy: strategy.clone(),
            n,
            accuracy: rate(correct.iter().filter(|&&c| c).count(), n),
            ci: interval(&correct, bootstrap, exec)?,
            tie_rate: Some(rate(
                outcomes.iter().filter(|o| o.prediction.tie).count(),
                n,
            )),
            invalid_rate: rate(outcomes.iter().filter(|o| !o.prediction.valid).count(), n),
        });
    }
    Ok(cells)
}

/// Row label used for a VLM strategy in TV tables.
pub fn tv_row_label(strategy: &Strategy) -> String {
    match strategy {
        Strategy::Vlm => "original".into(),
        Strategy::VlmBlind => "blind".into(),
        other => other.to_string(),
    }
}

/// TV rows in both modes; a mode whose distributions have no mass is skipped.
pub fn tv_rows(
    task: Task,
    model: &str,
    row: &str,
    reference: &str,
    dist: &AnswerDistribution,
    against: &AnswerDistribution,
) -> Vec<TvRow> {
    [TvMode::LettersOnly, TvMode::WithInvalid]
        .into_iter()
        .filter_map(|mode| {
            tv_distance(dist, against, mode).ok().map(|tv| TvRow {
                task,
                model: model.to_string(),
                row: row.to_string(),
                reference: reference.to_string(),
                mode,
                tv,
            })
        })
        .collect()
}

/// Cells, TV-to-ground-truth rows and answer distributions for one scored
/// answer set, split by task.
pub fn vqa_inputs(
    score: &VqaScore,
    model: &str,
    strategy: &Strategy,
    bootstrap: Option<Bootstrap>,
    exec: Execution,
) -> Result<ReportInputs> {
    let mut inputs = ReportInputs::default();
    let label = tv_row_label(strategy);
    let source = match strategy {
        Strategy::Vlm => "sighted".to_string(),
        Strategy::VlmBlind => "blind".to_string(),
        other => other.to_string(),
    };
    for task in tasks_in(score.outcomes.iter().map(|o| o.task)) {
        let outcomes: Vec<_> = score.outcomes.iter().filter(|o| o.task == task).collect();
        let n = outcomes.len();
        let correct: Vec<bool> = outcomes.iter().map(|o| o.correct).collect();
        let dist = AnswerDistribution::from_answers(outcomes.iter().map(|o| o.extracted));
        let gt = AnswerDistribution::from_answers(outcomes.iter().map(|o| Some(o.ground_truth)));
        inputs.cells.push(Cell {
            task,
            model: model.to_string(),
            strategy: strategy.clone(),
            n,
            accuracy: rate(correct.iter().filter(|&&c| c).count(), n),
            ci: interval(&correct, bootstrap, exec)?,
            tie_rate: None,
            invalid_rate: rate(dist.invalid as usize, n),
        });
        inputs
            .tv_rows
            .extend(tv_rows(task, model, &label, "gt", &dist, &gt));
        for (source, distribution) in [(source.clone(), dist), ("gt".to_string(), gt)] {
            inputs.distributions.push(DistributionRow {
                task,
                model: model.to_string(),
                source,
                distribution,
            });
        }
    }
    Ok(inputs)
}

/// Per-task sighted/blind comparisons with their TV rows (each mode against
/// ground truth, and sighted against blind) and answer distributions.
pub fn blind_inputs(
    manifest: &Manifest,
    answers: &[AnswerRecord],
    model: Option<&str>,
    exec: Execution,
) -> Result<(BTreeMap<Task, BlindComparison>, ReportInputs)> {
    // Scoring the whole selection first reports coverage problems once.
    blind_compare(manifest, answers, exec)?;
    let mut inputs = ReportInputs::default();
    let mut per_task = BTreeMap::new();
    for task in tasks_in(manifest.samples.iter().map(|s| s.task)) {
        let subset = manifest.filter_task(task);
        let task_answers: Vec<AnswerRecord> = answers
            .iter()
            .filter(|a| subset.get(&a.sample_id).is_some())
            .cloned()
            .collect();
        let c = blind_compare(&subset, &task_answers, exec)?;
        let model = model.unwrap_or(&c.sighted.model_id).to_string();
        let (s, b, g) = (
            &c.sighted.distribution,
            &c.blind.distribution,
            &c.ground_truth,
        );
        inputs
            .tv_rows
            .extend(tv_rows(task, &model, "original", "gt", s, g));
        inputs
            .tv_rows
            .extend(tv_rows(task, &model, "blind", "gt", b, g));
        inputs
            .tv_rows
            .extend(tv_rows(task, &model, "original", "blind", s, b));
        for (source, dist) in [("sighted", s), ("blind", b), ("gt", g)] {
            inputs.distributions.push(DistributionRow {
                task,
                model: model.clone(),
                source: source.into(),
                distribution: dist.clone(),
            });
        }
        per_task.insert(task, c);
    }
    Ok((per_task, inputs))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn cells_csv(&self) -> String {
        let mut out =
            String::from("task,model,strategy,n,accuracy,ci_lo,ci_hi,tie_rate,invalid_rate\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{},{},{:.6}",
                c.task,
                csv_field(&c.model),
                c.strategy,
                c.n,
                c.accuracy,
                opt(c.ci.map(|ci| ci.lo)),
                opt(c.ci.map(|ci| ci.hi)),
                opt(c.tie_rate),
                c.invalid_rate
            );
        }
        out
    }

    /// Model-by-task matrix with visual, VLM and blind columns per task, three decimals.
    pub fn matrix_csv(&self) -> String {
        let strategies = [Strategy::Visual, Strategy::Vlm, Strategy::VlmBlind];
        let tasks: Vec<Task> = TABLE_ORDER
            .into_iter()
            .filter(|t| self.cells.iter().any(|c| c.task == *t))
            .collect();
        let models: BTreeSet<&str> = self.cells.iter().map(|c| c.model.as_str()).collect();
        let lookup: BTreeMap<(Task, &str, &Strategy), f64> =
            self.cells.iter().map(|c| (c.key(), c.accuracy)).collect();
        let mut out = String::from("model");
        for t in &tasks {
            for s in &strategies {
                let _ = write!(out, ",{t}:{s}");
            }
        }
        out.push('\n');
        for m in models {
            out.push_str(&csv_field(m));
            for &t in &tasks {
                for s in &strategies {
                    out.push(',');
                    if let Some(v) = lookup.get(&(t, m, s)) {
                        let _ = write!(out, "{v:.3}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn tv_csv(&self) -> String {
        let mut out = String::from("task,model,row,reference,mode,tv\n");
        for r in &self.tv_rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6}",
                r.task,
                csv_field(&r.model),
                csv_field(&r.row),
                csv_field(&r.reference),
                mode_name(r.mode),
                r.tv
            );
        }
        out
    }

    pub fn layers_csv(&self) -> String {
        let mut out =
            String::from("task,model,index,layer,accuracy,tie_rate,invalid_rate,samples\n");
        for c in &self.layer_curves {
            for (i, p) in c.points.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.6},{:.6},{:.6},{}",
                    c.task,
                    csv_field(&c.model),
                    i,
                    csv_field(&p.layer),
                    p.accuracy,
                    p.tie_rate,
                    p.invalid_rate,
                    p.samples
                );
            }
        }
        out
    }

    pub fn ranks_csv(&self) -> String {
        let mut out =
            String::from("task,model,visual_accuracy,vlm_accuracy,visual_rank,vlm_rank\n");
        for r in &self.rank_tables {
            for (m, v) in &r.scores_visual {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6},{},{}",
                    r.task,
                    csv_field(m),
                    v,
                    r.scores_vlm[m],
                    r.comparison.ranks_a[m],
                    r.comparison.ranks_b[m]
                );
            }
        }
        out
    }

    pub fn rank_summary_csv(&self) -> String {
        let mut out = String::from("task,models,spearman,best_visual,best_vlm,best_differs\n");
        for r in &self.rank_tables {
            let c = &r.comparison;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.task,
                r.scores_visual.len(),
                opt(c.spearman),
                csv_field(&c.best_a.join(";")),
                csv_field(&c.best_b.join(";")),
                c.best_differs
            );
        }
        out
    }

    pub fn summary_md(&self) -> String {
        let mut out = String::from("# Evaluation summary\n\n");
        let _ = writeln!(
            out,
            "{} result cells, {} TV rows, {} layer curves.\n",
            self.cells.len(),
            self.tv_rows.len(),
            self.layer_curves.len()
        );
        if !self.cells.is_empty() {
            out.push_str("## Accuracy\n\n| task | model | strategy | n | accuracy | CI | invalid |\n|---|---|---|---|---|---|---|\n");
            for c in &self.cells {
                let ci =
                    c.ci.map(|ci| format!("[{:.3}, {:.3}]", ci.lo, ci.hi))
                        .unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {:.3} | {} | {:.3} |",
                    c.task, c.model, c.strategy, c.n, c.accuracy, ci, c.invalid_rate
                );
            }
            out.push('\n');
        }
        if !self.rank_tables.is_empty() {
            out.push_str("## Visual vs VLM ranking\n\n| task | spearman | best visual | best VLM | best differs |\n|---|---|---|---|---|\n");
            for r in &self.rank_tables {
                let c = &r.comparison;
                let rho = c
                    .spearman
                    .map(|v| format!("{v:.3}"))
                    .unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    r.task,
                    rho,
                    c.best_a.join(", "),
                    c.best_b.join(", "),
                    if c.best_differs { "yes" } else { "no" }
                );
            }
            out.push('\n');
        }
        if !self.tv_rows.is_empty() {
            out.push_str("## TV distance\n\n| task | model | row | reference | mode | tv |\n|---|---|---|---|---|---|\n");
            for r in &self.tv_rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {:.3} |",
                    r.task,
                    r.model,
                    r.row,
                    r.reference,
                    mode_name(r.mode),
                    r.tv
                );
            }
            out.push('\n');
        }
        for c in &self.layer_curves {
            let best = c
                .points
                .iter()
                .max_by(|a, b| a.accuracy.total_cmp(&b.accuracy));
            if let Some(b) = best {
                let _ = writeln!(
                    out,
                    "Layer curve {} / {}: {} layers, best `{}` at {:.3}.",
                    c.task,
                    c.model,
                    c.points.len(),
                    b.layer,
                    b.accuracy
                );
            }
        }
        out
    }

    /// Plot series keyed by file name.
    pub fn plot_series(&self) -> BTreeMap<String, String> {
        let mut files = BTreeMap::new();
        for c in &self.layer_curves {
            let mut s = String::from("x,layer,y\n");
            for (i, p) in c.points.iter().enumerate() {
                let _ = writeln!(s, "{},{},{:.6}", i, csv_field(&p.layer), p.accuracy);
            }
            files.insert(
                format!("layer_curve__{}__{}.csv", c.task, file_safe(&c.model)),
                s,
            );
        }
        let mut groups: BTreeMap<(Task, &str), Vec<&DistributionRow>> = BTreeMap::new();
        for d in &self.distributions {
            groups.entry((d.task, &d.model)).or_default().push(d);
        }
        for ((task, model), rows) in groups {
            let letters: BTreeSet<char> = rows
                .iter()
                .flat_map(|r| r.distribution.counts.keys().copied())
                .collect();
            let mut s = String::from("x");
            for r in &rows {
                let _ = write!(s, ",{}", csv_field(&r.source));
            }
            s.push('\n');
            let fraction = |r: &DistributionRow, count: u64| {
                let total = r.distribution.total();
                if total == 0 {
                    0.0
                } else {
                    count as f64 / total as f64
                }
            };
            for l in letters {
                s.push(l);
                for r in &rows {
                    let count = r.distribution.counts.get(&l).copied().unwrap_or(0);
                    let _ = write!(s, ",{:.6}", fraction(r, count));
                }
                s.push('\n');
            }
            s.push_str("invalid");
            for r in &rows {
                let _ = write!(s, ",{:.6}", fraction(r, r.distribution.invalid));
            }
            s.push('\n');
            files.insert(
                format!("distribution__{}__{}.csv", task, file_safe(model)),
                s,
            );
        }
        files
    }

    /// Writes every artifact under `dir`, creating it if needed.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let plots = dir.join("plots");
        std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
        let files = [
            ("report.json", self.to_json()),
            ("cells.csv", self.cells_csv()),
            ("matrix.csv", self.matrix_csv()),
            ("tv.csv", self.tv_csv()),
            ("layers.csv", self.layers_csv()),
            ("ranks.csv", self.ranks_csv()),
            ("rank_summary.csv", self.rank_summary_csv()),
            ("summary.md", self.summary_md()),
        ];
        for (name, body) in files {
            write_file(&dir.join(name), &body)?;
        }
        for (name, body) in self.plot_series() {
            write_file(&plots.join(name), &body)?;
        }
        Ok(())
    }
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
