mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use vlmprobe_core::vqa::extract::extract_choice;
use vlmprobe_core::vqa::prompt::{option_texts, render_prompt, PromptTemplate, PromptVariant};
use vlmprobe_core::vqa::score::{blind_compare, score_vqa, AnswerMode, AnswerRecord};
use vlmprobe_core::{Execution, Manifest, SampleRecord, Task};

use common::{letter, record};

fn task() -> impl Strategy<Value = Task> {
    prop::sample::select(Task::ALL.to_vec())
}

fn choices_for(task: Task) -> std::ops::Range<usize> {
    match task {
        Task::DepthOrder => 2..3,
        Task::OddOneOut => 3..5,
        _ => 2..6,
    }
}

fn sample(id: &str, task: Task, n: usize, gt: usize) -> SampleRecord {
    let mut s = record(id, task, n, letter(gt));
    if task == Task::DepthOrder {
        s.object_names = Some(BTreeMap::from([('A', "chair".into()), ('B', "lamp".into())]));
    }
    s
}

fn manifest(specs: &[(Task, usize, usize)]) -> Manifest {
    Manifest::new(
        ".",
        specs
            .iter()
            .enumerate()
            .map(|(i, &(t, n, gt))| sample(&format!("s{i}"), t, n, gt))
            .collect(),
    )
}

fn answer(id: &str, mode: AnswerMode, text: &str) -> AnswerRecord {
    AnswerRecord {
        sample_id: id.into(),
        mode,
        raw_text: text.into(),
        model_id: "m".into(),
        prompt_variant: PromptVariant::SingleImage,
        metadata: None,
    }
}

fn specs() -> impl Strategy<Value = Vec<(Task, usize, usize)>> {
    prop::collection::vec(
        task().prop_flat_map(|t| choices_for(t).prop_flat_map(move |n| (Just(t), Just(n), 0..n))),
        1..30,
    )
}

proptest! {
    #[test]
    fn extracted_letter_is_always_a_choice(raw in ".{0,40}", n in 2usize..6) {
        let choices: Vec<char> = (0..n).map(letter).collect();
        let texts: BTreeMap<char, String> = choices.iter().map(|&l| (l, format!("item {l}"))).collect();
        if let Some(l) = extract_choice(&raw, &choices, Some(&texts)) {
            prop_assert!(choices.contains(&l));
        }
    }

    #[test]
    fn letter_like_text_is_always_a_choice(
        head in "[A-Za-z()]{1,3}[.:,)]?",
        tail in "( [A-Za-z()]{1,6}){0,4}",
        n in 2usize..6,
    ) {
        let choices: Vec<char> = (0..n).map(letter).collect();
        if let Some(l) = extract_choice(&format!("{head}{tail}"), &choices, None) {
            prop_assert!(choices.contains(&l));
        }
    }

    #[test]
    fn leading_whitespace_is_ignored(raw in ".{0,40}", pad in "[ \t\n]{1,5}", n in 2usize..6) {
        let choices: Vec<char> = (0..n).map(letter).collect();
        prop_assert_eq!(
            extract_choice(&format!("{pad}{raw}"), &choices, None),
            extract_choice(&raw, &choices, None)
        );
    }

    #[test]
    fn bare_letter_answers_round_trip(k in 0usize..6, n in 2usize..7, lower in any::<bool>()) {
        let choices: Vec<char> = (0..n).map(letter).collect();
        let l = letter(k);
        let text = if lower { l.to_ascii_lowercase().to_string() } else { format!("({l})") };
        let want = (k < n).then_some(l);
        prop_assert_eq!(extract_choice(&text, &choices, None), want);
    }

    #[test]
    fn accuracy_counts_only_valid_correct_answers(specs in specs(), seed in any::<u64>()) {
        let m = manifest(&specs);
        let mut r = common::rng(seed, &[]);
        let answers: Vec<AnswerRecord> = m.samples.iter().map(|s| {
            use rand::Rng;
            let text = match r.random_range(0..3) {
                0 => "no idea".to_string(),
                1 => format!("({})", s.ground_truth),
                _ => format!("{}", letter(r.random_range(0..s.choices.len()))),
            };
            answer(&s.sample_id, AnswerMode::Sighted, &text)
        }).collect();
        let score = score_vqa(&m, &answers, AnswerMode::Sighted, Execution::Sequential).unwrap();
        let n = m.samples.len();
        for o in &score.outcomes {
            if o.correct {
                prop_assert_eq!(o.extracted, Some(o.ground_truth));
            }
        }
        prop_assert_eq!(score.accuracy, score.correct_count() as f64 / n as f64);
        prop_assert_eq!(score.distribution.total(), n as u64);
        prop_assert!(score.accuracy <= 1.0 - score.invalid_rate + 1e-12);
        let par = score_vqa(&m, &answers, AnswerMode::Sighted, Execution::Parallel);
        prop_assert_eq!(par.unwrap(), score);
    }

    #[test]
    fn distributions_cover_every_sample(specs in specs(), k in 0usize..3) {
        let m = manifest(&specs);
        let mut answers = Vec::new();
        for s in &m.samples {
            answers.push(answer(&s.sample_id, AnswerMode::Sighted, &letter(k % s.choices.len()).to_string()));
            answers.push(answer(&s.sample_id, AnswerMode::Blind, "unsure"));
        }
        let cmp = blind_compare(&m, &answers, Execution::Sequential).unwrap();
        let n = m.samples.len() as u64;
        prop_assert_eq!(cmp.sighted.distribution.total(), n);
        prop_assert_eq!(cmp.blind.distribution.total(), n);
        prop_assert_eq!(cmp.ground_truth.total(), n);
        prop_assert!(cmp.tv_letters.is_none());
        for tv in [cmp.tv_with_invalid.sighted_blind, cmp.tv_with_invalid.sighted_gt, cmp.tv_with_invalid.blind_gt] {
            prop_assert!((0.0..=1.0).contains(&tv));
        }
        prop_assert_eq!(cmp.tv_with_invalid.sighted_blind, 1.0);
    }

    #[test]
    fn depth_prompts_distinguish_object_names(
        a in "[a-z]{1,8}( [a-z]{1,8})?",
        b in "[a-z]{1,8}( [a-z]{1,8})?",
        c in "[a-z]{1,8}( [a-z]{1,8})?",
        d in "[a-z]{1,8}( [a-z]{1,8})?",
    ) {
        prop_assume!((a.as_str(), b.as_str()) != (c.as_str(), d.as_str()));
        let t = PromptTemplate::for_task(Task::DepthOrder, PromptVariant::SingleImage);
        let mk = |x: &str, y: &str| {
            let mut s = sample("d", Task::DepthOrder, 2, 0);
            s.object_names = Some(BTreeMap::from([('A', x.to_string()), ('B', y.to_string())]));
            render_prompt(&t, &s).unwrap()
        };
        let p = mk(&a, &b);
        prop_assert!(p.contains(&a) && p.contains(&b));
        prop_assert_ne!(p, mk(&c, &d));
    }

    #[test]
    fn prompts_list_every_choice_in_order(t in task(), variant in prop::sample::select(vec![PromptVariant::SingleImage, PromptVariant::MultiImage])) {
        let n = choices_for(t).start;
        let s = sample("p", t, n, 0);
        let text = render_prompt(&PromptTemplate::for_task(t, variant), &s).unwrap();
        let texts = option_texts(&s).unwrap();
        let mut last = 0;
        for l in &s.choices {
            let tag = format!("({l}) {}", texts[l]);
            let at = text.find(&tag);
            prop_assert!(at.is_some(), "{tag} missing from {text}");
            prop_assert!(at.unwrap() >= last);
            last = at.unwrap();
        }
        prop_assert!(!text.contains('{'), "unfilled placeholder in {text}");
    }
}

#[test]
fn mismatched_task_template_is_rejected() {
    let s = sample("x", Task::ArtStyle, 3, 0);
    let t = PromptTemplate::for_task(Task::OddOneOut, PromptVariant::SingleImage);
    assert!(render_prompt(&t, &s).is_err());
}
