//! Prompt construction for every stage role, and parsing of what comes back.
//!
//! Prompts are assembled from plain-text templates with `{name}`
//! placeholders. The built-in templates ship with the crate; a run can
//! override any of them from a directory. Structure is fixed and machine
//! countable: in-context shots begin with `### Example`, the target section
//! with `### Task`, paragraphs are labelled `[i] Title` with sentences
//! numbered `(j)`, and readers are instructed to finish with an
//! `Answer:` line.

pub mod parse;
pub mod shots;
pub mod wire;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{ChatMessage, ChatRequest, GenerationParams};
use crate::corpus::{HotpotExample, Paragraph};

pub use parse::{
    parse_decomposer_output, parse_reader_output, parse_selector_output, ParseError,
    ParsedReader, ParsedSelector, MAX_SUBQUESTIONS,
};
pub use shots::{ShotExample, ShotPool};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid shot count {0}; expected one of 0, 1, 2, 4, 8")]
    InvalidShotCount(usize),
    #[error("profile requests {0} shots but no shot pool was provided")]
    MissingShotPool(usize),
    #[error("shot pool cannot cover the request: {0}")]
    ShotPool(String),
    #[error("chain-of-thought shots need rationales; selected shot {0} has none")]
    MissingRationale(usize),
    #[error("reader evidence {found} does not fit input mode {mode}")]
    EvidenceMismatch { mode: String, found: &'static str },
    #[error("selector prompt needs at least one candidate paragraph")]
    NoCandidates,
    #[error("sub-question hints are only valid for the sentence selector")]
    UnexpectedSubQuestions,
    #[error("profile role {found} cannot drive a {expected} prompt")]
    WrongRole { expected: &'static str, found: String },
    #[error("no resolvable supporting facts to teach from")]
    NoTeacherEvidence,
    #[error("template problem: {0}")]
    Template(String),
}

/// Shot counts a profile may request.
pub const VALID_SHOT_COUNTS: [usize; 5] = [0, 1, 2, 4, 8];

/// The stage role a prompt drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    Reader,
    SingleStageSelector,
    ParagraphSelector,
    SentenceSelector,
    Decomposer,
    CotTeacher,
    AllInOne,
}

impl std::fmt::Display for PromptRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PromptRole::Reader => "reader",
            PromptRole::SingleStageSelector => "single_stage_selector",
            PromptRole::ParagraphSelector => "paragraph_selector",
            PromptRole::SentenceSelector => "sentence_selector",
            PromptRole::Decomposer => "decomposer",
            PromptRole::CotTeacher => "cot_teacher",
            PromptRole::AllInOne => "all_in_one",
        };
        write!(f, "{name}")
    }
}

/// What a reader prompt carries as context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderInputMode {
    QuestionOnly,
    SupportingFacts,
    GoldOnly,
    GoldPlus2Distractors,
    AllParagraphs,
}

impl ReaderInputMode {
    /// All modes, in the order ablation reports list them.
    pub fn all() -> [ReaderInputMode; 5] {
        [
            ReaderInputMode::QuestionOnly,
            ReaderInputMode::SupportingFacts,
            ReaderInputMode::GoldOnly,
            ReaderInputMode::GoldPlus2Distractors,
            ReaderInputMode::AllParagraphs,
        ]
    }

    /// Column header used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            ReaderInputMode::QuestionOnly => "Question",
            ReaderInputMode::SupportingFacts => "Supporting Facts",
            ReaderInputMode::GoldOnly => "Gold Only",
            ReaderInputMode::GoldPlus2Distractors => "Gold + 2 Distractors",
            ReaderInputMode::AllParagraphs => "All Paragraphs",
        }
    }
}

impl std::fmt::Display for ReaderInputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ReaderInputMode::QuestionOnly => "question_only",
            ReaderInputMode::SupportingFacts => "supporting_facts",
            ReaderInputMode::GoldOnly => "gold_only",
            ReaderInputMode::GoldPlus2Distractors => "gold_plus_2_distractors",
            ReaderInputMode::AllParagraphs => "all_paragraphs",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for ReaderInputMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "question_only" => Ok(ReaderInputMode::QuestionOnly),
            "supporting_facts" => Ok(ReaderInputMode::SupportingFacts),
            "gold_only" => Ok(ReaderInputMode::GoldOnly),
            "gold_plus_2_distractors" => Ok(ReaderInputMode::GoldPlus2Distractors),
            "all_paragraphs" => Ok(ReaderInputMode::AllParagraphs),
            other => Err(format!("unknown reader input mode {other:?}")),
        }
    }
}

/// Prompt shape for one stage: role, in-context shot count, whether a
/// chain-of-thought rationale is requested, and (for readers) the input
/// condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptProfile {
    pub role: PromptRole,
    pub shots: usize,
    pub cot: bool,
    pub reader_input_mode: ReaderInputMode,
}

impl PromptProfile {
    /// A zero-shot, no-rationale reader profile for the given input mode.
    pub fn reader(mode: ReaderInputMode) -> PromptProfile {
        PromptProfile {
            role: PromptRole::Reader,
            shots: 0,
            cot: false,
            reader_input_mode: mode,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if !VALID_SHOT_COUNTS.contains(&self.shots) {
            return Err(PromptError::InvalidShotCount(self.shots));
        }
        Ok(())
    }
}

/// Evidence attached to a reader prompt.
#[derive(Debug, Clone, PartialEq)]
pub enum ReaderEvidence {
    /// The question alone.
    None,
    /// Individual sentences as (title, sentence) pairs.
    Sentences(Vec<(String, String)>),
    /// Whole paragraphs.
    Paragraphs(Vec<Paragraph>),
}

impl ReaderEvidence {
    fn variant_name(&self) -> &'static str {
        match self {
            ReaderEvidence::None => "no evidence",
            ReaderEvidence::Sentences(_) => "sentences",
            ReaderEvidence::Paragraphs(_) => "paragraphs",
        }
    }
}

/// A decomposed question: the original plus 2 to 4 sub-questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubQuestions {
    pub original: String,
    pub subs: Vec<String>,
}

/// Which selector family a prompt addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorVariant {
    SingleStage,
    Paragraph,
    Sentence,
}

impl SelectorVariant {
    fn system_template(&self) -> &'static str {
        match self {
            SelectorVariant::SingleStage => "selector_system_single_stage",
            SelectorVariant::Paragraph => "selector_system_paragraph",
            SelectorVariant::Sentence => "selector_system_sentence",
        }
    }
}

const BUILTIN_TEMPLATES: [(&str, &str); 18] = [
    ("reader_system", include_str!("../../templates/reader_system.txt")),
    ("reader_system_cot", include_str!("../../templates/reader_system_cot.txt")),
    ("all_in_one_system", include_str!("../../templates/all_in_one_system.txt")),
    (
        "selector_system_single_stage",
        include_str!("../../templates/selector_system_single_stage.txt"),
    ),
    (
        "selector_system_paragraph",
        include_str!("../../templates/selector_system_paragraph.txt"),
    ),
    (
        "selector_system_sentence",
        include_str!("../../templates/selector_system_sentence.txt"),
    ),
    ("decomposer_system", include_str!("../../templates/decomposer_system.txt")),
    ("cot_teacher_system", include_str!("../../templates/cot_teacher_system.txt")),
    ("reader_shot", include_str!("../../templates/reader_shot.txt")),
    ("reader_task", include_str!("../../templates/reader_task.txt")),
    ("selector_user", include_str!("../../templates/selector_user.txt")),
    ("decomposer_user", include_str!("../../templates/decomposer_user.txt")),
    ("cot_teacher_user", include_str!("../../templates/cot_teacher_user.txt")),
    (
        "sft_instruction_reader",
        include_str!("../../templates/sft_instruction_reader.txt"),
    ),
    (
        "sft_instruction_single_stage",
        include_str!("../../templates/sft_instruction_single_stage.txt"),
    ),
    (
        "sft_instruction_paragraph",
        include_str!("../../templates/sft_instruction_paragraph.txt"),
    ),
    (
        "sft_instruction_sentence",
        include_str!("../../templates/sft_instruction_sentence.txt"),
    ),
    (
        "sft_instruction_decomposer",
        include_str!("../../templates/sft_instruction_decomposer.txt"),
    ),
];

/// A named set of prompt templates. Lookups are by name; bodies are stored
/// with trailing whitespace trimmed.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    entries: BTreeMap<String, String>,
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("static regex"))
}

impl TemplateSet {
    /// The templates compiled into the crate.
    pub fn builtin() -> TemplateSet {
        TemplateSet {
            entries: BUILTIN_TEMPLATES
                .iter()
                .map(|(name, body)| (name.to_string(), body.trim_end().to_string()))
                .collect(),
        }
    }

    /// Built-in templates with overrides read from `dir`. A file named
    /// `<template-name>.txt` replaces that template; files that do not match
    /// a known template name are ignored with a warning.
    pub fn with_overrides(dir: &Path) -> Result<TemplateSet, PromptError> {
        let mut set = TemplateSet::builtin();
        let entries = std::fs::read_dir(dir).map_err(|err| {
            PromptError::Template(format!("cannot read template dir {}: {err}", dir.display()))
        })?;
        for entry in entries {
            let entry = entry
                .map_err(|err| PromptError::Template(format!("cannot list templates: {err}")))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let name = match path.file_stem().and_then(|s| s.to_str()) {
                Some(name) => name.to_string(),
                None => continue,
            };
            if !set.entries.contains_key(&name) {
                log::warn!("template override {:?} matches no known template", path);
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|err| {
                PromptError::Template(format!("cannot read {}: {err}", path.display()))
            })?;
            set.entries.insert(name, body.trim_end().to_string());
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> &str {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown template {name:?}"))
    }

    /// Fills `{name}` placeholders. Every placeholder in the template must
    /// have a value; placeholder-like text inside values is left alone.
    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let template = self.get(name);
        let mut missing = Vec::new();
        let rendered = placeholder_regex().replace_all(template, |caps: &regex::Captures| {
            let key = &caps[1];
            match values.iter().find(|(k, _)| *k == key) {
                Some((_, value)) => value.to_string(),
                None => {
                    missing.push(key.to_string());
                    String::new()
                }
            }
        });
        if !missing.is_empty() {
            return Err(PromptError::Template(format!(
                "template {name:?} is missing values for {missing:?}"
            )));
        }
        Ok(rendered.into_owned())
    }

    /// Stable digest over all template names and bodies, recorded in run
    /// traces so output changes are attributable to template changes.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (name, body) in &self.entries {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(body.as_bytes());
            hasher.update([0u8]);
        }
        let mut out = String::with_capacity(64);
        for byte in hasher.finalize() {
            write!(out, "{byte:02x}").expect("writing to string");
        }
        out
    }
}

/// One paragraph as prompts render it: a `[i] Title` label line, then the
/// sentences on one line, each prefixed with its `(j)` number.
pub fn paragraph_block(index: usize, paragraph: &Paragraph) -> String {
    let sentences: Vec<String> = paragraph
        .sentences
        .iter()
        .enumerate()
        .map(|(j, s)| format!("({j}) {s}"))
        .collect();
    format!("[{index}] {}\n{}", paragraph.title, sentences.join(" "))
}

fn sentence_lines(evidence: &[(String, String)]) -> String {
    let mut out = String::new();
    for (title, sentence) in evidence {
        out.push_str(&format!("- [{title}] {sentence}\n"));
    }
    out
}

fn paragraph_blocks(paragraphs: &[Paragraph]) -> String {
    paragraphs
        .iter()
        .enumerate()
        .map(|(i, p)| paragraph_block(i, p))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Builds [`ChatRequest`]s for every stage role from one template set.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    templates: TemplateSet,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        PromptBuilder::builtin()
    }
}

impl PromptBuilder {
    pub fn new(templates: TemplateSet) -> PromptBuilder {
        PromptBuilder { templates }
    }

    pub fn builtin() -> PromptBuilder {
        PromptBuilder::new(TemplateSet::builtin())
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn request(
        &self,
        system: String,
        user: String,
        params: &GenerationParams,
        model_id: &str,
        example_id: &str,
    ) -> ChatRequest {
        ChatRequest {
            system_prompt: system,
            messages: vec![ChatMessage::user(user)],
            params: params.clone(),
            model_id: model_id.to_string(),
            example_id: Some(example_id.to_string()),
        }
    }

    /// A reader prompt: optional in-context shots, then the task section
    /// with whatever evidence the input mode calls for.
    pub fn reader(
        &self,
        example: &HotpotExample,
        profile: &PromptProfile,
        evidence: &ReaderEvidence,
        pool: Option<&ShotPool>,
        params: &GenerationParams,
        model_id: &str,
    ) -> Result<ChatRequest, PromptError> {
        if profile.role != PromptRole::Reader {
            return Err(PromptError::WrongRole {
                expected: "reader",
                found: profile.role.to_string(),
            });
        }
        profile.validate()?;
        let mode_ok = matches!(
            (profile.reader_input_mode, evidence),
            (ReaderInputMode::QuestionOnly, ReaderEvidence::None)
                | (ReaderInputMode::SupportingFacts, ReaderEvidence::Sentences(_))
                | (ReaderInputMode::GoldOnly, ReaderEvidence::Paragraphs(_))
                | (ReaderInputMode::GoldPlus2Distractors, ReaderEvidence::Paragraphs(_))
                | (ReaderInputMode::AllParagraphs, ReaderEvidence::Paragraphs(_))
        );
        if !mode_ok {
            return Err(PromptError::EvidenceMismatch {
                mode: profile.reader_input_mode.to_string(),
                found: evidence.variant_name(),
            });
        }
        let selected = match (profile.shots, pool) {
            (0, _) => Vec::new(),
            (n, None) => return Err(PromptError::MissingShotPool(n)),
            (n, Some(pool)) => pool.select(n, profile.cot)?,
        };
        let mut sections = Vec::with_capacity(selected.len() + 1);
        for shot in selected {
            let rationale = match (&shot.rationale, profile.cot) {
                (Some(rationale), true) => format!("Reasoning: {rationale}\n"),
                _ => String::new(),
            };
            sections.push(self.templates.render(
                "reader_shot",
                &[
                    ("question", shot.question.as_str()),
                    ("evidence", sentence_lines(&shot.evidence).as_str()),
                    ("rationale", rationale.as_str()),
                    ("answer", shot.answer.as_str()),
                ],
            )?);
        }
        let evidence_text = match evidence {
            ReaderEvidence::None => String::new(),
            ReaderEvidence::Sentences(sentences) => {
                let lines = sentence_lines(sentences);
                format!("\nEvidence:\n{}", lines.trim_end())
            }
            ReaderEvidence::Paragraphs(paragraphs) => {
                format!("\nParagraphs:\n{}", paragraph_blocks(paragraphs))
            }
        };
        sections.push(self.templates.render(
            "reader_task",
            &[
                ("question", example.question.as_str()),
                ("evidence", evidence_text.as_str()),
            ],
        )?);
        let system = if profile.cot {
            self.templates.get("reader_system_cot")
        } else {
            self.templates.get("reader_system")
        };
        Ok(self.request(
            system.to_string(),
            sections.join("\n\n"),
            params,
            model_id,
            &example.id,
        ))
    }

    /// A selector prompt over candidate paragraphs. Sub-question hints are
    /// only accepted for the sentence selector.
    pub fn selector(
        &self,
        example: &HotpotExample,
        variant: SelectorVariant,
        candidates: &[Paragraph],
        subquestions: Option<&SubQuestions>,
        params: &GenerationParams,
        model_id: &str,
    ) -> Result<ChatRequest, PromptError> {
        if candidates.is_empty() {
            return Err(PromptError::NoCandidates);
        }
        if subquestions.is_some() && variant != SelectorVariant::Sentence {
            return Err(PromptError::UnexpectedSubQuestions);
        }
        let subs_text = match subquestions {
            Some(subs) => format!(
                "Sub-questions:\n{}\n",
                wire::format_subquestions(&subs.subs)
            ),
            None => String::new(),
        };
        let user = self.templates.render(
            "selector_user",
            &[
                ("question", example.question.as_str()),
                ("subquestions", subs_text.as_str()),
                ("candidates", paragraph_blocks(candidates).as_str()),
            ],
        )?;
        let system = self.templates.get(variant.system_template()).to_string();
        Ok(self.request(system, user, params, model_id, &example.id))
    }

    /// The one-pass prompt: all candidates, asking for titles, facts, and
    /// the answer together.
    pub fn all_in_one(
        &self,
        example: &HotpotExample,
        params: &GenerationParams,
        model_id: &str,
    ) -> Result<ChatRequest, PromptError> {
        if example.context.is_empty() {
            return Err(PromptError::NoCandidates);
        }
        let user = self.templates.render(
            "selector_user",
            &[
                ("question", example.question.as_str()),
                ("subquestions", ""),
                ("candidates", paragraph_blocks(&example.context).as_str()),
            ],
        )?;
        let system = self.templates.get("all_in_one_system").to_string();
        Ok(self.request(system, user, params, model_id, &example.id))
    }

    /// A decomposition prompt: the question alone.
    pub fn decomposer(
        &self,
        example: &HotpotExample,
        params: &GenerationParams,
        model_id: &str,
    ) -> Result<ChatRequest, PromptError> {
        let user = self
            .templates
            .render("decomposer_user", &[("question", example.question.as_str())])?;
        let system = self.templates.get("decomposer_system").to_string();
        Ok(self.request(system, user, params, model_id, &example.id))
    }

    /// A teacher prompt asking for the reasoning that connects the gold
    /// evidence to the gold answer.
    pub fn cot_teacher(
        &self,
        example: &HotpotExample,
        params: &GenerationParams,
        model_id: &str,
    ) -> Result<ChatRequest, PromptError> {
        let evidence: Vec<(String, String)> = example
            .supporting_facts
            .iter()
            .filter_map(|sf| {
                example
                    .resolve_fact(sf)
                    .map(|s| (sf.title.clone(), s.to_string()))
            })
            .collect();
        if evidence.is_empty() {
            return Err(PromptError::NoTeacherEvidence);
        }
        let user = self.templates.render(
            "cot_teacher_user",
            &[
                ("question", example.question.as_str()),
                ("evidence", sentence_lines(&evidence).as_str()),
                ("answer", example.answer.as_str()),
            ],
        )?;
        let system = self.templates.get("cot_teacher_system").to_string();
        Ok(self.request(system, user, params, model_id, &example.id))
    }
}
