//! Parsers for model outputs, one per stage role. Parsers are lenient about
//! surface form but strict about referents: titles and sentence indices are
//! validated against the candidate paragraphs, and anything unrecognizable
//! is dropped with a warning rather than passed downstream.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::corpus::{Paragraph, SupportingFact};

use super::SubQuestions;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("model output is empty")]
    EmptyOutput,
    #[error("no recognizable selector references: {0}")]
    NoSelectorRefs(String),
    #[error("fewer than 2 distinct sub-questions recognized")]
    TooFewSubQuestions,
}

/// A parsed reader reply. `no_marker` is set when the reply had no
/// `Answer:` line and the whole text was taken as the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReader {
    pub answer: String,
    pub rationale: Option<String>,
    pub no_marker: bool,
}

/// Extracts the final answer from a reader reply. The last `Answer:` marker
/// wins; text before it is kept as the rationale. With no marker the whole
/// trimmed reply is the answer, flagged via `no_marker`.
pub fn parse_reader_output(text: &str) -> Result<ParsedReader, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyOutput);
    }
    let lowered = text.to_ascii_lowercase();
    match lowered.rfind("answer:") {
        Some(pos) => {
            let answer = text[pos + "answer:".len()..].trim().to_string();
            let before = text[..pos].trim();
            let rationale = if before.is_empty() {
                None
            } else {
                Some(before.to_string())
            };
            Ok(ParsedReader {
                answer,
                rationale,
                no_marker: false,
            })
        }
        None => Ok(ParsedReader {
            answer: text.trim().to_string(),
            rationale: None,
            no_marker: true,
        }),
    }
}

/// A parsed selector reply: validated titles, validated supporting facts,
/// and warnings for every reference that was dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedSelector {
    pub titles: Vec<String>,
    pub facts: Vec<SupportingFact>,
    pub warnings: Vec<String>,
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    if line.len() >= label.len() && line[..label.len()].eq_ignore_ascii_case(label) {
        Some(&line[label.len()..])
    } else {
        None
    }
}

fn tuple_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(\s*([^()#,]+?)\s*,\s*(\d+)\s*\)").expect("static regex"))
}

fn push_fact(
    title: &str,
    index: usize,
    lookup: &HashMap<&str, usize>,
    facts: &mut Vec<SupportingFact>,
    warnings: &mut Vec<String>,
) {
    match lookup.get(title) {
        None => warnings.push(format!("unknown title {title:?}")),
        Some(&count) if index >= count => warnings.push(format!(
            "sentence index {index} out of range for {title:?} ({count} sentences)"
        )),
        Some(_) => {
            let fact = SupportingFact::new(title, index);
            if !facts.contains(&fact) {
                facts.push(fact);
            }
        }
    }
}

fn collect_fact_refs(
    source: &str,
    lookup: &HashMap<&str, usize>,
    facts: &mut Vec<SupportingFact>,
    warnings: &mut Vec<String>,
) {
    for capture in tuple_regex().captures_iter(source) {
        let title = capture[1].trim();
        if let Ok(index) = capture[2].parse::<usize>() {
            push_fact(title, index, lookup, facts, warnings);
        }
    }
    for chunk in source.split([';', '\n']) {
        let chunk = chunk.trim().trim_start_matches(['-', '*']).trim();
        if let Some((left, right)) = chunk.rsplit_once('#') {
            let title = left.trim();
            let digits: String = right
                .trim()
                .chars()
                .take_while(|c| c.is_ascii_digit())
                .collect();
            if title.is_empty() || digits.is_empty() {
                warnings.push(format!("unreadable fact reference {chunk:?}"));
                continue;
            }
            let index: usize = digits.parse().expect("digits parse as usize");
            push_fact(title, index, lookup, facts, warnings);
        }
    }
}

/// Parses a selector reply against its candidate paragraphs.
///
/// Recognized forms: `Titles: A; B` lines, `Facts: A#0; B#2` lines, bare
/// `Title#index` references, and `(Title, index)` tuples. References that
/// do not resolve against the candidates are dropped with warnings. A reply
/// in which nothing resolves is a parse failure.
pub fn parse_selector_output(
    text: &str,
    candidates: &[Paragraph],
) -> Result<ParsedSelector, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyOutput);
    }
    let lookup: HashMap<&str, usize> = candidates
        .iter()
        .map(|p| (p.title.as_str(), p.sentences.len()))
        .collect();
    let mut parsed = ParsedSelector::default();
    let mut labeled = false;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = strip_label(line, "Titles:") {
            labeled = true;
            for part in rest.split(';') {
                let name = part.trim();
                if name.is_empty() {
                    continue;
                }
                if lookup.contains_key(name) {
                    if !parsed.titles.iter().any(|t| t == name) {
                        parsed.titles.push(name.to_string());
                    }
                } else {
                    parsed.warnings.push(format!("unknown title {name:?}"));
                }
            }
        } else if let Some(rest) = strip_label(line, "Facts:") {
            labeled = true;
            collect_fact_refs(rest, &lookup, &mut parsed.facts, &mut parsed.warnings);
        }
    }
    if !labeled {
        collect_fact_refs(text, &lookup, &mut parsed.facts, &mut parsed.warnings);
    }
    if parsed.titles.is_empty() && parsed.facts.is_empty() {
        let reason = if parsed.warnings.is_empty() {
            "no Titles/Facts lines and no fact references found".to_string()
        } else {
            parsed.warnings.join("; ")
        };
        return Err(ParseError::NoSelectorRefs(reason));
    }
    Ok(parsed)
}

fn numbered_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\d+[.)]\s*(.+)$").expect("static regex"))
}

/// Maximum sub-questions kept from a decomposer reply.
pub const MAX_SUBQUESTIONS: usize = 4;

/// Parses a decomposer reply into sub-questions. Numbered lines are taken
/// in order, duplicates dropped; more than four are truncated with a
/// warning. Fewer than two distinct sub-questions is a parse failure.
pub fn parse_decomposer_output(
    text: &str,
    original: &str,
) -> Result<(SubQuestions, Vec<String>), ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyOutput);
    }
    let mut subs: Vec<String> = Vec::new();
    let mut warnings = Vec::new();
    for line in text.lines() {
        if let Some(capture) = numbered_line_regex().captures(line) {
            let sub = capture[1].trim().to_string();
            if !sub.is_empty() && !subs.contains(&sub) {
                subs.push(sub);
            }
        }
    }
    if subs.len() > MAX_SUBQUESTIONS {
        warnings.push(format!(
            "decomposer produced {} sub-questions; keeping the first {MAX_SUBQUESTIONS}",
            subs.len()
        ));
        subs.truncate(MAX_SUBQUESTIONS);
    }
    if subs.len() < 2 {
        return Err(ParseError::TooFewSubQuestions);
    }
    Ok((
        SubQuestions {
            original: original.to_string(),
            subs,
        },
        warnings,
    ))
}
