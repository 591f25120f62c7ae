use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use vlmprobe_core::archive::names;
use vlmprobe_core::synth::{scripted_answers, write_answers, write_dataset, Script, SynthSpec};
use vlmprobe_core::vqa::AnswerMode;
use vlmprobe_core::Task;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let spec = SynthSpec {
            seed: 3,
            per_task: 4,
            tasks: vec![
                Task::SemanticCorrespondence,
                Task::ArtStyle,
                Task::OddOneOut,
            ],
            ..SynthSpec::default()
        };
        let m = write_dataset(&data, &spec).unwrap();
        let mut answers = scripted_answers(&m, "vlm", AnswerMode::Sighted, Script::Chance { seed: 1 });
        answers.extend(scripted_answers(&m, "vlm", AnswerMode::Blind, Script::Chance { seed: 2 }));
        write_answers(&data.join("answers.jsonl"), &answers).unwrap();
        Fixture { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn manifest(&self) -> String {
        self.path("data/manifest.jsonl").display().to_string()
    }

    fn answers(&self) -> String {
        self.path("data/answers.jsonl").display().to_string()
    }

    fn out(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlmprobe"))
        .args(args)
        .env_remove("VLMPROBE_JOBS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn eval_visual(f: &Fixture, out: &str, extra: &[&str]) -> Output {
    let layer = names::vision_patch(0);
    let mut args = vec![
        "eval-visual",
        "--manifest",
        &f.manifest(),
        "--layer",
        &layer,
        "--out",
        out,
        "--seed",
        "7",
        "--bootstrap",
        "200",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(&refs)
}

#[test]
fn eval_visual_writes_results() {
    let f = Fixture::new();
    let out = f.out("visual");
    let o = eval_visual(&f, &out, &["--model", "enc"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["run.json", "predictions.jsonl", "result.json", "report_inputs.json"] {
        assert!(f.path("visual").join(name).is_file(), "{name}");
    }
    let cells = json(f.path("visual/result.json"));
    let cells = cells.as_array().unwrap();
    assert_eq!(cells.len(), 3);
    for c in cells {
        assert_eq!(c["model"], "enc");
        assert_eq!(c["strategy"], "visual");
        assert!(c["ci"]["lo"].as_f64().unwrap() <= c["accuracy"].as_f64().unwrap());
    }
    let echo = json(f.path("visual/run.json"));
    assert_eq!(echo["command"], "eval-visual");
    assert_eq!(echo["config"]["seed"], 7);
    assert_eq!(echo["config"]["bootstrap"], 200);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let f = Fixture::new();
    assert_eq!(code(&eval_visual(&f, &f.out("a"), &[])), 0);
    assert_eq!(code(&eval_visual(&f, &f.out("b"), &["--jobs", "1"])), 0);
    assert_eq!(snapshot(&f.path("a")).len(), 4);
    let (a, mut b) = (snapshot(&f.path("a")), snapshot(&f.path("b")));
    let run_a = a[Path::new("run.json")].clone();
    b.insert(PathBuf::from("run.json"), run_a.clone());
    assert_eq!(String::from_utf8(run_a).unwrap().matches(&f.out("a")).count(), 1);
    assert_eq!(a, b);
}

#[test]
fn run_echo_reproduces_the_run() {
    let f = Fixture::new();
    assert_eq!(code(&eval_visual(&f, &f.out("first"), &[])), 0);
    let echo = f.out("first/run.json");
    let o = run(&["eval-visual", "--config", &echo, "--out", &f.out("again")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["predictions.jsonl", "result.json", "report_inputs.json"] {
        assert_eq!(
            std::fs::read(f.path("first").join(name)).unwrap(),
            std::fs::read(f.path("again").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn flags_override_config_file() {
    let f = Fixture::new();
    let cfg = f.path("cfg.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "manifest": f.manifest(),
            "layer": names::vision_patch(0),
            "out": f.out("from_file"),
            "seed": 1,
            "bootstrap": 50,
            "model": "file",
        })
        .to_string(),
    )
    .unwrap();
    let cfg = cfg.display().to_string();
    let o = run(&["eval-visual", "--config", &cfg, "--model", "flag", "--out", &f.out("from_flag")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!f.path("from_file").exists());
    let echo = json(f.path("from_flag/run.json"));
    assert_eq!(echo["config"]["model"], "flag");
    assert_eq!(echo["config"]["bootstrap"], 50);
    assert_eq!(echo["config"]["seed"], 1);
}

#[test]
fn missing_answers_is_a_usage_error() {
    let f = Fixture::new();
    let o = run(&["eval-vqa", "--manifest", &f.manifest(), "--out", &f.out("vqa")]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--answers"));
}

#[test]
fn bootstrap_without_seed_is_a_usage_error() {
    let f = Fixture::new();
    let o = run(&[
        "eval-vqa",
        "--manifest",
        &f.manifest(),
        "--answers",
        &f.answers(),
        "--out",
        &f.out("vqa"),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn vqa_blind_and_report_chain() {
    let f = Fixture::new();
    let o = run(&[
        "eval-vqa", "--manifest", &f.manifest(), "--answers", &f.answers(),
        "--out", &f.out("vqa"), "--seed", "4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "blind-compare", "--manifest", &f.manifest(), "--answers", &f.answers(),
        "--out", &f.out("blind"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&eval_visual(&f, &f.out("visual"), &[])), 0);
    let o = run(&[
        "report", "--inputs", &f.out("vqa"), &f.out("blind"), &f.out("visual"),
        "--out", &f.out("report"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tv = std::fs::read_to_string(f.path("report/tv.csv")).unwrap();
    assert!(tv.starts_with("task,model,row,reference,mode,tv\n"));
    assert!(tv.lines().any(|l| l.contains(",original,blind,")));
    for name in ["report.json", "cells.csv", "matrix.csv", "summary.md"] {
        assert!(f.path("report").join(name).is_file(), "{name}");
    }
}

#[test]
fn commands_leave_inputs_untouched() {
    let f = Fixture::new();
    let before = snapshot(&f.path("data"));
    let layer = names::vision_patch(0);
    let runs: Vec<Vec<String>> = vec![
        vec!["validate".into(), "--manifest".into(), f.manifest(), "--out".into(), f.out("o1")],
        vec!["chance".into(), "--manifest".into(), f.manifest(), "--out".into(), f.out("o2")],
        vec![
            "probe-layers".into(), "--manifest".into(), f.manifest(), "--layers".into(), layer.clone(),
            "--out".into(), f.out("o3"),
        ],
        vec![
            "blind-compare".into(), "--manifest".into(), f.manifest(), "--answers".into(), f.answers(),
            "--out".into(), f.out("o4"),
        ],
    ];
    for args in runs {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = run(&refs);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&eval_visual(&f, &f.out("o5"), &[])), 0);
    assert_eq!(snapshot(&f.path("data")), before);
}

#[test]
fn validate_fails_on_violations() {
    let f = Fixture::new();
    let manifest = f.path("data/manifest.jsonl");
    let text = std::fs::read_to_string(&manifest).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: Value = serde_json::from_str(&lines[1]).unwrap();
    rec["ground_truth"] = "Z".into();
    lines[1] = rec.to_string();
    let broken = f.path("data/broken.jsonl");
    std::fs::write(&broken, lines.join("\n") + "\n").unwrap();
    let o = run(&["validate", "--manifest", &broken.display().to_string()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ground_truth"));
    assert_eq!(code(&run(&["validate", "--manifest", &f.manifest()])), 0);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
}
