//! Canonical text forms for stage outputs. Everything that emits a stage
//! output (oracles, fine-tuning targets, tests) goes through these, and the
//! parsers in [`super::parse`] accept what these produce, so
//! format-then-parse round-trips.

use crate::corpus::SupportingFact;

/// `Titles:` and `Facts:` lines for a selector output. A line is present
/// only when its list is non-empty.
pub fn format_selector_output(titles: &[String], facts: &[SupportingFact]) -> String {
    let mut lines = Vec::with_capacity(2);
    if !titles.is_empty() {
        lines.push(format!("Titles: {}", titles.join("; ")));
    }
    if !facts.is_empty() {
        let parts: Vec<String> = facts
            .iter()
            .map(|sf| format!("{}#{}", sf.title, sf.sentence_index))
            .collect();
        lines.push(format!("Facts: {}", parts.join("; ")));
    }
    lines.join("\n")
}

/// A reader output: optional rationale, then the final answer line.
pub fn format_reader_output(rationale: Option<&str>, answer: &str) -> String {
    match rationale {
        Some(rationale) if !rationale.is_empty() => {
            format!("{rationale}\nAnswer: {answer}")
        }
        _ => format!("Answer: {answer}"),
    }
}

/// Numbered sub-question lines, one per line, 1-based.
pub fn format_subquestions(subs: &[String]) -> String {
    subs.iter()
        .enumerate()
        .map(|(i, sub)| format!("{}. {sub}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_output_has_one_line_per_nonempty_list() {
        let titles = vec!["A".to_string(), "B".to_string()];
        let facts = vec![SupportingFact::new("A", 0), SupportingFact::new("B", 2)];
        assert_eq!(
            format_selector_output(&titles, &facts),
            "Titles: A; B\nFacts: A#0; B#2"
        );
        assert_eq!(format_selector_output(&titles, &[]), "Titles: A; B");
        assert_eq!(format_selector_output(&[], &facts), "Facts: A#0; B#2");
        assert_eq!(format_selector_output(&[], &[]), "");
    }

    #[test]
    fn reader_output_places_answer_last() {
        assert_eq!(format_reader_output(None, "Paris"), "Answer: Paris");
        assert_eq!(
            format_reader_output(Some("The capital is Paris."), "Paris"),
            "The capital is Paris.\nAnswer: Paris"
        );
    }

    #[test]
    fn subquestions_are_numbered_from_one() {
        let subs = vec!["Who wrote X?".to_string(), "When was the author born?".to_string()];
        assert_eq!(
            format_subquestions(&subs),
            "1. Who wrote X?\n2. When was the author born?"
        );
    }
}
