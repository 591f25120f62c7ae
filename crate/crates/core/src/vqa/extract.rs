//! Letter extraction from free-form model output.
//!
//! Rules are tried in order and the first hit wins:
//! 1. the first token is a choice letter, bare or as `(A)`, `A.`, `A)`, `A:`
//!    (case-insensitive);
//! 2. the first parenthesized choice letter anywhere, e.g. `... (C) ...`;
//! 3. the phrase `answer is X`;
//! 4. exactly one option text occurs in the output (case-insensitive).
//!
//! Anything else is invalid (`None`).

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

static FIRST_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\(?([A-Za-z])\)?[.:,)]?$").expect("valid regex"));
static PARENTHESIZED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(([A-Za-z])\)").expect("valid regex"));
static ANSWER_IS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\banswer\s+is\s*:?\s*\(?([A-Za-z])\b").expect("valid regex"));

pub fn extract_choice(
    raw: &str,
    choices: &[char],
    option_texts: Option<&BTreeMap<char, String>>,
) -> Option<char> {
    let in_choices = |c: char| {
        let up = c.to_ascii_uppercase();
        choices.contains(&up).then_some(up)
    };
    let letter_of = |caps: regex::Captures| caps[1].chars().next().and_then(in_choices);

    let text = raw.trim();
    if let Some(token) = text.split_whitespace().next() {
        if let Some(l) = FIRST_TOKEN.captures(token).and_then(letter_of) {
            return Some(l);
        }
    }
    if let Some(l) = PARENTHESIZED.captures_iter(text).find_map(letter_of) {
        return Some(l);
    }
    if let Some(l) = ANSWER_IS.captures_iter(text).find_map(letter_of) {
        return Some(l);
    }
    let texts = option_texts?;
    let lower = text.to_lowercase();
    let mut hits = texts
        .iter()
        .filter(|(l, t)| choices.contains(l) && !t.is_empty() && lower.contains(&t.to_lowercase()))
        .map(|(&l, _)| l);
    match (hits.next(), hits.next()) {
        (Some(l), None) => Some(l),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ABCD: [char; 4] = ['A', 'B', 'C', 'D'];

    #[test]
    fn basic_cases() {
        assert_eq!(extract_choice("B", &ABCD, None), Some('B'));
        assert_eq!(
            extract_choice("I think the answer is (D).", &ABCD, None),
            Some('D')
        );
        assert_eq!(extract_choice("banana", &ABCD, None), None);
        assert_eq!(extract_choice("", &ABCD, None), None);
    }

    #[test]
    fn letters_outside_choices_are_skipped() {
        assert_eq!(extract_choice("E", &ABCD, None), None);
        assert_eq!(extract_choice("(E) or maybe (b)", &ABCD, None), Some('B'));
        assert_eq!(extract_choice("C", &['A', 'B'], None), None);
    }

    #[test]
    fn option_text_must_be_unique() {
        let texts: BTreeMap<char, String> =
            [('A', "table".to_string()), ('B', "bookcase".to_string())]
                .into_iter()
                .collect();
        assert_eq!(
            extract_choice("The table is closer", &['A', 'B'], Some(&texts)),
            Some('A')
        );
        assert_eq!(
            extract_choice("the table and the bookcase", &['A', 'B'], Some(&texts)),
            None
        );
    }
}
