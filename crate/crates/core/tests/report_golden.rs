use std::path::{Path, PathBuf};

use serde_json::Value;

use vlmprobe_core::report::{build_report, Cell, EvalReport, ReportInputs, Strategy};
use vlmprobe_core::Task;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn table_cells() -> Vec<Cell> {
    let text = std::fs::read_to_string(fixtures().join("table1.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let tasks: Vec<Task> = v["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_str().unwrap().parse().unwrap())
        .collect();
    let mut cells = Vec::new();
    for (model, rows) in v["models"].as_object().unwrap() {
        for (strategy, key) in [
            (Strategy::Visual, "visual"),
            (Strategy::Vlm, "vlm"),
            (Strategy::VlmBlind, "vlm_blind"),
        ] {
            for (task, acc) in tasks.iter().zip(rows[key].as_array().unwrap()) {
                cells.push(Cell {
                    task: *task,
                    model: model.clone(),
                    strategy: strategy.clone(),
                    n: 0,
                    accuracy: acc.as_f64().unwrap(),
                    ci: None,
                    tie_rate: None,
                    invalid_rate: 0.0,
                });
            }
        }
    }
    cells
}

fn report(cells: Vec<Cell>) -> EvalReport {
    build_report(ReportInputs {
        cells,
        ..Default::default()
    })
    .unwrap()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(fixtures().join("golden").join(name)).unwrap()
}

#[test]
fn matrix_matches_golden() {
    assert_eq!(report(table_cells()).matrix_csv(), golden("matrix.csv"));
}

#[test]
fn rank_summary_matches_golden() {
    assert_eq!(
        report(table_cells()).rank_summary_csv(),
        golden("rank_summary.csv")
    );
}

#[test]
fn input_order_does_not_matter() {
    let cells = table_cells();
    let mut reversed = cells.clone();
    reversed.reverse();
    let (a, b) = (report(cells), report(reversed));
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.cells_csv(), b.cells_csv());
}

#[test]
fn conflicting_duplicate_cell_is_rejected() {
    let mut cells = table_cells();
    let mut dup = cells[0].clone();
    dup.accuracy += 0.01;
    cells.push(dup);
    assert!(build_report(ReportInputs {
        cells,
        ..Default::default()
    })
    .is_err());
}

#[test]
fn written_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(table_cells());
    r.write_to(dir.path()).unwrap();
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("matrix.csv")).unwrap(),
        golden("matrix.csv")
    );
}
