//! VQA side of the evaluation: prompt rendering, letter extraction from
//! free-form generations, scoring, and sighted-vs-blind comparison.

pub mod extract;
pub mod prompt;
pub mod score;

pub use extract::extract_choice;
pub use prompt::{render_prompt, PromptTemplate, PromptVariant};
pub use score::{
    blind_compare, extract_for, load_answers, score_vqa, AnswerMode, AnswerRecord, BlindComparison,
    TvTriple, VqaOutcome, VqaScore,
};
