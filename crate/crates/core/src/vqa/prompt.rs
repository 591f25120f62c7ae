use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{SampleRecord, Task};

const ANSWER_SUFFIX: &str = "\nAnswer with the option's letter from the given choices directly.";

const DEPTH: &str = "Which object is closer to the camera taking this photo, the {object_a} (highlighted by a red box) or the {object_b} (highlighted by a blue box)? {choices}";

const SEMANTIC: &str = "Humans can find corresponding points for different objects in the same category. For instance, if there are images of two different cats, then the left ear tip of one cat corresponds to the left ear tip of the other cat, and the right front paw of one cat corresponds to the right front paw of the other cat. Given the following two images, a reference point is annotated on the first image, labeled with REF. You are given multiple red-circled points on the second image, choices of \"A, B, C, D\" are drawn beside each circle. Select between the choices on the second image and find the corresponding point for the reference point. Which point is corresponding to the reference point? Select from the following choices. {choices}";

const FUNCTIONAL: &str = "Humans can find corresponding points for the same action between different objects. For instance, if a person uses a pot versus a hammer to \"Mash Pound\", then the handle of the pot will be the corresponding point to the handle of the hammer because they serve the same function for the action -- to hold. Given the following two images, a reference point is annotated on the first image, labeled with REF. You are given multiple red-circled points on the second image, choices of \"A, B, C, D\" are drawn beside each circle. Select between the choices on the second image and find the corresponding point for the reference point. Which point is corresponding to the reference point? Select from the following choices. {choices}";

const LOW_LEVEL: &str = "A point is circled on the first image, labeled with REF. We change the camera position or lighting and shoot the second image. You are given multiple red-circled points on the second image, choices of \"A, B, C, D\" are drawn beside each circle. Which point on the second image corresponds to the point in the first image? Select from the following choices. {choices}";

const ART_STYLE: &str = "Some most common art painting styles include Realism, Impressionism, Expressionism, Pop Art, and Cubism. Given the following images of art paintings, use the first image as the reference image, and determine which one of the second or the third image shares the same style as the reference image? Select from the following choices. {choices}";

const ODD_ONE_OUT: &str = "Given {n_images} images, all but one of them depicts the same object from a different angle. Can you tell which image is the odd one out? Select from the following choices. {choices}";

const ORDINALS: [&str; 10] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    /// Images stitched into one input.
    #[default]
    SingleImage,
    /// Images passed as separate inputs (natively multi-image models).
    MultiImage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task: Task,
    pub variant: PromptVariant,
    pub text: String,
}

impl PromptTemplate {
    pub fn for_task(task: Task, variant: PromptVariant) -> Self {
        let body = match task {
            Task::DepthOrder => DEPTH,
            Task::SemanticCorrespondence => SEMANTIC,
            Task::FunctionalCorrespondence => FUNCTIONAL,
            Task::LowLevelMatching => LOW_LEVEL,
            Task::ArtStyle => ART_STYLE,
            Task::OddOneOut => ODD_ONE_OUT,
        };
        PromptTemplate {
            task,
            variant,
            text: format!("{body}{ANSWER_SUFFIX}"),
        }
    }
}

/// The text each option letter stands for in the rendered choice list.
pub fn option_texts(sample: &SampleRecord) -> Result<BTreeMap<char, String>> {
    sample
        .choices
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let text = match sample.task {
                Task::DepthOrder => sample
                    .object_names
                    .as_ref()
                    .and_then(|n| n.get(&l))
                    .cloned()
                    .ok_or_else(|| {
                        Error::sample(&sample.sample_id, format!("no object name for option {l}"))
                    })?,
                t if t.is_correspondence() => format!("Point {l}"),
                // option images follow the reference image
                Task::ArtStyle => format!("the {} image", ordinal(i + 1)?),
                Task::OddOneOut => format!("the {} image", ordinal(i)?),
                _ => unreachable!(),
            };
            Ok((l, text))
        })
        .collect()
}

fn ordinal(i: usize) -> Result<&'static str> {
    ORDINALS
        .get(i)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("no ordinal for image index {i}")))
}

/// Fills a template from a sample. Choices render as `(A) text (B) text ...`
/// in manifest order.
pub fn render_prompt(template: &PromptTemplate, sample: &SampleRecord) -> Result<String> {
    if template.task != sample.task {
        return Err(Error::InvalidArgument(format!(
            "template for {} applied to {} sample {}",
            template.task, sample.task, sample.sample_id
        )));
    }
    let texts = option_texts(sample)?;
    let choices = sample
        .choices
        .iter()
        .map(|l| format!("({l}) {}", texts[l]))
        .collect::<Vec<_>>()
        .join(" ");

    let mut out = template.text.replace("{choices}", &choices);
    if out.contains("{n_images}") {
        out = out.replace("{n_images}", &sample.choices.len().to_string());
    }
    if out.contains("{object_a}") || out.contains("{object_b}") {
        out = out.replace("{object_a}", &texts[&'A']).replace(
            "{object_b}",
            texts
                .get(&'B')
                .ok_or_else(|| Error::sample(&sample.sample_id, "depth prompt needs option B"))?,
        );
    }
    let leftover = Regex::new(r"\{(object_a|object_b|n_images|choices)\}").expect("valid regex");
    if let Some(m) = leftover.find(&out) {
        return Err(Error::sample(
            &sample.sample_id,
            format!("unfilled placeholder {}", m.as_str()),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImageTransform;
    use crate::manifest::ImageRef;

    fn sample(task: Task, n: usize) -> SampleRecord {
        let t = ImageTransform::identity(32, 32, 16).unwrap();
        SampleRecord {
            sample_id: "s".into(),
            task,
            images: vec![
                ImageRef {
                    id: "i".into(),
                    transform: t,
                    dump: "x".into()
                };
                n
            ],
            keypoints: None,
            boxes: None,
            choices: (0..n).map(|i| (b'A' + i as u8) as char).collect(),
            ground_truth: 'A',
            condition: None,
            object_names: None,
        }
    }

    #[test]
    fn depth_prompt_matches_reference_text() {
        let mut s = sample(Task::DepthOrder, 2);
        s.object_names = Some(
            [('A', "table".to_string()), ('B', "bookcase".to_string())]
                .into_iter()
                .collect(),
        );
        let p = render_prompt(
            &PromptTemplate::for_task(Task::DepthOrder, PromptVariant::SingleImage),
            &s,
        )
        .unwrap();
        assert_eq!(
            p,
            "Which object is closer to the camera taking this photo, the table (highlighted by a red box) or the bookcase (highlighted by a blue box)? (A) table (B) bookcase\nAnswer with the option's letter from the given choices directly."
        );
    }

    #[test]
    fn depth_prompt_without_names_fails() {
        let s = sample(Task::DepthOrder, 2);
        assert!(render_prompt(
            &PromptTemplate::for_task(Task::DepthOrder, PromptVariant::SingleImage),
            &s
        )
        .is_err());
    }

    #[test]
    fn odd_one_out_four_images() {
        let s = sample(Task::OddOneOut, 4);
        let p = render_prompt(
            &PromptTemplate::for_task(Task::OddOneOut, PromptVariant::MultiImage),
            &s,
        )
        .unwrap();
        assert_eq!(
            p,
            "Given 4 images, all but one of them depicts the same object from a different angle. Can you tell which image is the odd one out? Select from the following choices. (A) the first image (B) the second image (C) the third image (D) the fourth image\nAnswer with the option's letter from the given choices directly."
        );
    }

    #[test]
    fn art_style_text() {
        let s = sample(Task::ArtStyle, 2);
        let p = render_prompt(
            &PromptTemplate::for_task(Task::ArtStyle, PromptVariant::SingleImage),
            &s,
        )
        .unwrap();
        assert_eq!(
            p,
            "Some most common art painting styles include Realism, Impressionism, Expressionism, Pop Art, and Cubism. Given the following images of art paintings, use the first image as the reference image, and determine which one of the second or the third image shares the same style as the reference image? Select from the following choices. (A) the second image (B) the third image\nAnswer with the option's letter from the given choices directly."
        );
    }

    #[test]
    fn semantic_choices() {
        let s = sample(Task::SemanticCorrespondence, 4);
        let p = render_prompt(
            &PromptTemplate::for_task(Task::SemanticCorrespondence, PromptVariant::SingleImage),
            &s,
        )
        .unwrap();
        assert!(p.ends_with("Select from the following choices. (A) Point A (B) Point B (C) Point C (D) Point D\nAnswer with the option's letter from the given choices directly."));
        assert!(p.starts_with(
            "Humans can find corresponding points for different objects in the same category."
        ));
    }

    #[test]
    fn task_mismatch() {
        let s = sample(Task::ArtStyle, 2);
        assert!(render_prompt(
            &PromptTemplate::for_task(Task::OddOneOut, PromptVariant::SingleImage),
            &s
        )
        .is_err());
    }
}
