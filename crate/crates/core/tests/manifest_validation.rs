use std::sync::OnceLock;

use proptest::prelude::*;
use tempfile::TempDir;

use vlmprobe_core::manifest::{validate_dataset, validate_samples};
use vlmprobe_core::synth::{write_dataset, SynthSpec};
use vlmprobe_core::{Execution, Manifest, Task};

fn fixture() -> &'static (TempDir, Manifest) {
    static CELL: OnceLock<(TempDir, Manifest)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            seed: 5,
            per_task: 3,
            ..SynthSpec::default()
        };
        let m = write_dataset(dir.path(), &spec).unwrap();
        (dir, m)
    })
}

#[derive(Debug, Clone, Copy)]
enum Corruption {
    GroundTruthOutside,
    DropChoice,
    KeypointOutside,
    BoxInverted,
    RemoveImage,
    ShiftPad,
    MissingDump,
    EmptyId,
    DuplicateId,
}

const ALL: [Corruption; 9] = [
    Corruption::GroundTruthOutside,
    Corruption::DropChoice,
    Corruption::KeypointOutside,
    Corruption::BoxInverted,
    Corruption::RemoveImage,
    Corruption::ShiftPad,
    Corruption::MissingDump,
    Corruption::EmptyId,
    Corruption::DuplicateId,
];

/// Applies `c` to sample `i`; `None` when the corruption does not apply to its task.
fn corrupt(m: &Manifest, i: usize, c: Corruption) -> Option<Manifest> {
    let mut m = m.clone();
    let n = m.samples.len();
    let s = &mut m.samples[i];
    match c {
        Corruption::GroundTruthOutside => {
            s.ground_truth = (b'A' + s.choices.len() as u8) as char;
        }
        Corruption::DropChoice => {
            s.choices.pop();
            if !s.choices.contains(&s.ground_truth) {
                s.ground_truth = s.choices[0];
            }
        }
        Corruption::KeypointOutside => {
            let kp = s.keypoints.as_mut()?;
            let w = s.images[1].transform.orig_w as f64;
            kp.options.values_mut().next()?[0] = w;
        }
        Corruption::BoxInverted => {
            let b = s.boxes.as_mut()?.values_mut().next()?;
            b.swap(0, 2);
        }
        Corruption::RemoveImage => {
            s.images.pop();
        }
        Corruption::ShiftPad => s.images[0].transform.pad_x += 1,
        Corruption::MissingDump => s.images[0].dump = "dumps/absent.vlmp".into(),
        Corruption::EmptyId => s.sample_id.clear(),
        Corruption::DuplicateId => {
            let other = m.samples[(i + 1) % n].sample_id.clone();
            m.samples[i].sample_id = other;
        }
    }
    Some(m)
}

#[test]
fn clean_fixture_has_no_violations() {
    let (dir, m) = fixture();
    assert!(validate_samples(m, Execution::Sequential).is_empty());
    let report = validate_dataset(dir.path().join("manifest.jsonl"), Execution::Parallel).unwrap();
    assert!(report.is_clean(), "{:?}", report.violations);
    assert_eq!(report.samples, m.samples.len());
}

#[test]
fn every_corruption_applies_somewhere() {
    let (_, m) = fixture();
    for c in ALL {
        let hits = (0..m.samples.len())
            .filter(|&i| corrupt(m, i, c).is_some())
            .count();
        assert!(hits > 0, "{c:?}");
    }
}

#[test]
fn inverted_depth_box_is_reported() {
    let (_, m) = fixture();
    let i = m
        .samples
        .iter()
        .position(|s| s.task == Task::DepthOrder)
        .unwrap();
    let bad = corrupt(m, i, Corruption::BoxInverted).unwrap();
    let v = validate_samples(&bad, Execution::Sequential);
    assert!(v.iter().any(|v| v.reason.contains("box")), "{v:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn single_field_corruption_is_reported(i in any::<prop::sample::Index>(), k in 0..ALL.len()) {
        let (_, m) = fixture();
        let i = i.index(m.samples.len());
        let Some(bad) = corrupt(m, i, ALL[k]) else { return Ok(()); };
        let seq = validate_samples(&bad, Execution::Sequential);
        prop_assert!(!seq.is_empty(), "{:?} on {}", ALL[k], m.samples[i].sample_id);
        prop_assert_eq!(validate_samples(&bad, Execution::Parallel), seq);
    }
}
