//! Supervised fine-tuning data export and training manifests.
//!
//! Exports are Alpaca-shaped records (instruction, input, output) whose
//! outputs are exactly the wire formats the parsers read back, so every
//! exported target round-trips to the gold labels it was built from.
//! Flagged examples are skipped: training data only comes from records
//! whose supporting facts all resolve.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, GenerationParams};
use crate::corpus::{gold_paragraphs, HotpotExample, Level};
use crate::prompting::wire::{format_selector_output, format_subquestions};
use crate::prompting::{paragraph_block, PromptBuilder, PromptError, TemplateSet};

#[derive(Debug, Error)]
pub enum SftError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot encode manifest: {0}")]
    Toml(#[from] toml::ser::Error),
    #[error("{0}")]
    Config(String),
}

fn io_err(path: &Path, source: std::io::Error) -> SftError {
    SftError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One instruction-tuning record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlpacaRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

/// Which stage model a dataset trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftTask {
    Reader,
    SingleStageSelector,
    ParagraphSelector,
    SentenceSelector,
    Decomposer,
}

impl SftTask {
    pub fn all() -> [SftTask; 5] {
        [
            SftTask::Reader,
            SftTask::SingleStageSelector,
            SftTask::ParagraphSelector,
            SftTask::SentenceSelector,
            SftTask::Decomposer,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            SftTask::Reader => "reader",
            SftTask::SingleStageSelector => "single_stage_selector",
            SftTask::ParagraphSelector => "paragraph_selector",
            SftTask::SentenceSelector => "sentence_selector",
            SftTask::Decomposer => "decomposer",
        }
    }

    fn instruction_template(&self) -> &'static str {
        match self {
            SftTask::Reader => "sft_instruction_reader",
            SftTask::SingleStageSelector => "sft_instruction_single_stage",
            SftTask::ParagraphSelector => "sft_instruction_paragraph",
            SftTask::SentenceSelector => "sft_instruction_sentence",
            SftTask::Decomposer => "sft_instruction_decomposer",
        }
    }
}

impl std::str::FromStr for SftTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SftTask::all()
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown SFT task {s:?}"))
    }
}

/// Extra per-example data some tasks need.
#[derive(Debug, Clone, Default)]
pub struct SftSources<'a> {
    /// Reader rationales by example id. When present, only examples with a
    /// rationale are exported and targets carry the reasoning before the
    /// answer line.
    pub rationales: Option<&'a BTreeMap<String, String>>,
    /// Decomposition targets by example id. Required for the decomposer
    /// task; examples without one are skipped.
    pub decompositions: Option<&'a BTreeMap<String, Vec<String>>>,
}

/// An exported dataset plus what was left out.
#[derive(Debug, Clone, PartialEq)]
pub struct SftExport {
    pub records: Vec<AlpacaRecord>,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

fn candidate_blocks(paragraphs: &[&crate::corpus::Paragraph]) -> String {
    paragraphs
        .iter()
        .enumerate()
        .map(|(i, p)| paragraph_block(i, p))
        .collect::<Vec<_>>()
        .join("\n")
}

fn selector_input(
    templates: &TemplateSet,
    example: &HotpotExample,
    candidates: &str,
) -> Result<String, SftError> {
    Ok(templates.render(
        "selector_user",
        &[
            ("question", example.question.as_str()),
            ("subquestions", ""),
            ("candidates", candidates),
        ],
    )?)
}

fn reader_input(example: &HotpotExample) -> String {
    let mut input = format!("Question: {}\nSupporting facts:\n", example.question);
    for sf in &example.supporting_facts {
        let sentence = example.resolve_fact(sf).unwrap_or_default();
        let _ = writeln!(input, "- [{}] {}", sf.title, sentence);
    }
    input.trim_end().to_string()
}

fn export_one(
    example: &HotpotExample,
    task: SftTask,
    templates: &TemplateSet,
    sources: &SftSources<'_>,
) -> Result<Option<AlpacaRecord>, SftError> {
    let instruction = templates.get(task.instruction_template()).to_string();
    let gold = gold_paragraphs(example);
    let gold_titles: Vec<String> = gold.iter().map(|p| p.title.clone()).collect();
    let all: Vec<&crate::corpus::Paragraph> = example.context.iter().collect();
    let (input, output) = match task {
        SftTask::Reader => {
            let output = match sources.rationales {
                Some(map) => match map.get(&example.id) {
                    Some(rationale) => {
                        format!("Reasoning: {rationale}\nAnswer: {}", example.answer)
                    }
                    None => return Ok(None),
                },
                None => format!("Answer: {}", example.answer),
            };
            (reader_input(example), output)
        }
        SftTask::SingleStageSelector => (
            selector_input(templates, example, &candidate_blocks(&all))?,
            format_selector_output(&gold_titles, &example.supporting_facts),
        ),
        SftTask::ParagraphSelector => (
            selector_input(templates, example, &candidate_blocks(&all))?,
            format_selector_output(&gold_titles, &[]),
        ),
        SftTask::SentenceSelector => (
            selector_input(templates, example, &candidate_blocks(&gold))?,
            format_selector_output(&[], &example.supporting_facts),
        ),
        SftTask::Decomposer => {
            let subs = match sources.decompositions.and_then(|m| m.get(&example.id)) {
                Some(subs) if subs.len() >= 2 => subs,
                _ => return Ok(None),
            };
            (
                templates.render(
                    "decomposer_user",
                    &[("question", example.question.as_str())],
                )?,
                format_subquestions(subs),
            )
        }
    };
    Ok(Some(AlpacaRecord {
        instruction,
        input,
        output,
    }))
}

/// Exports one task's dataset. Flagged examples are skipped; tasks whose
/// extra sources are missing for an example skip that example too.
pub fn export_sft(
    examples: &[HotpotExample],
    task: SftTask,
    templates: &TemplateSet,
    sources: &SftSources<'_>,
) -> Result<SftExport, SftError> {
    if task == SftTask::Decomposer && sources.decompositions.is_none() {
        return Err(SftError::Config(
            "decomposer export needs decomposition targets".to_string(),
        ));
    }
    let mut records = Vec::with_capacity(examples.len());
    let mut skipped = 0;
    let mut warnings = Vec::new();
    for example in examples {
        if !example.flags.is_empty() {
            skipped += 1;
            continue;
        }
        match export_one(example, task, templates, sources)? {
            Some(record) => records.push(record),
            None => {
                skipped += 1;
                warnings.push(format!("{}: no target for {}", task.name(), example.id));
            }
        }
    }
    Ok(SftExport {
        records,
        skipped,
        warnings,
    })
}

/// Writes records as one pretty-printed JSON array.
pub fn write_alpaca(records: &[AlpacaRecord], path: &Path) -> Result<(), SftError> {
    let text = serde_json::to_string_pretty(records)?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_alpaca(path: &Path) -> Result<Vec<AlpacaRecord>, SftError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Which examples get teacher rationales.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CotFilter {
    All,
    HardOnly,
}

impl CotFilter {
    fn keeps(&self, example: &HotpotExample) -> bool {
        match self {
            CotFilter::All => true,
            CotFilter::HardOnly => example.level == Level::Hard,
        }
    }
}

/// One teacher-written rationale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotTarget {
    pub id: String,
    pub rationale: String,
}

/// The merged result of a rationale-generation run.
#[derive(Debug)]
pub struct CotOutcome {
    /// Targets sorted by example id.
    pub targets: Vec<CotTarget>,
    pub reused: usize,
    pub generated: usize,
    pub failed: usize,
}

impl CotOutcome {
    pub fn as_map(&self) -> BTreeMap<String, String> {
        self.targets
            .iter()
            .map(|t| (t.id.clone(), t.rationale.clone()))
            .collect()
    }
}

/// Asks the teacher for a rationale per kept example. With an output path,
/// targets stream there as JSON lines and existing lines are reused, so
/// interrupted runs resume. Teacher failures are counted and skipped; a
/// rerun retries them.
pub fn gen_cot_targets(
    examples: &[HotpotExample],
    teacher: &Backend,
    builder: &PromptBuilder,
    params: &GenerationParams,
    filter: CotFilter,
    out_path: Option<&Path>,
    parallelism: usize,
) -> Result<CotOutcome, SftError> {
    let kept: Vec<&HotpotExample> = examples
        .iter()
        .filter(|ex| ex.flags.is_empty() && filter.keeps(ex))
        .collect();

    let mut existing: BTreeMap<String, CotTarget> = BTreeMap::new();
    if let Some(path) = out_path {
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CotTarget>(line) {
                    Ok(target) => {
                        existing.insert(target.id.clone(), target);
                    }
                    Err(err) => log::warn!(
                        "skipping unreadable rationale at {}:{}: {err}",
                        path.display(),
                        lineno + 1
                    ),
                }
            }
        }
    }
    let wanted: BTreeMap<&str, ()> = kept.iter().map(|e| (e.id.as_str(), ())).collect();
    existing.retain(|id, _| wanted.contains_key(id.as_str()));
    let todo: Vec<&HotpotExample> = kept
        .iter()
        .filter(|e| !existing.contains_key(&e.id))
        .copied()
        .collect();
    let reused = existing.len();

    let writer = match out_path {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
                }
            }
            let file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| io_err(path, e))?;
            Some(Mutex::new(file))
        }
        None => None,
    };

    let fresh: Mutex<Vec<CotTarget>> = Mutex::new(Vec::new());
    let failed = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    let workers = parallelism.max(1).min(todo.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= todo.len() {
                    break;
                }
                let example = todo[i];
                let rationale = builder
                    .cot_teacher(example, params, teacher.model_id())
                    .map_err(|e| e.to_string())
                    .and_then(|request| {
                        teacher.generate(&request).map_err(|e| e.to_string())
                    })
                    .map(|response| response.text.trim().to_string());
                match rationale {
                    Ok(rationale) if !rationale.is_empty() => {
                        let target = CotTarget {
                            id: example.id.clone(),
                            rationale,
                        };
                        if let Some(writer) = &writer {
                            if let Ok(line) = serde_json::to_string(&target) {
                                use std::io::Write as _;
                                let mut file =
                                    writer.lock().expect("rationale writer poisoned");
                                let _ = file
                                    .write_all(line.as_bytes())
                                    .and_then(|_| file.write_all(b"\n"));
                            }
                        }
                        fresh.lock().expect("targets poisoned").push(target);
                    }
                    Ok(_) => {
                        log::warn!("teacher returned an empty rationale for {}", example.id);
                        failed.fetch_add(1, Ordering::SeqCst);
                    }
                    Err(err) => {
                        log::warn!("teacher failed for {}: {err}", example.id);
                        failed.fetch_add(1, Ordering::SeqCst);
                    }
                }
            });
        }
    });

    let generated = fresh.lock().expect("targets poisoned").len();
    for target in fresh.into_inner().expect("targets poisoned") {
        existing.insert(target.id.clone(), target);
    }
    Ok(CotOutcome {
        targets: existing.into_values().collect(),
        reused,
        generated,
        failed: failed.into_inner(),
    })
}

/// One fine-tuning recipe. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub name: String,
    pub base_model: String,
    pub data_points: u64,
    pub training_steps: u32,
    pub batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub max_learning_rate: f64,
    pub scheduler_type: String,
    pub warmup_ratio: f64,
    pub max_sequence_length: u32,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub trainable_lora_weights: String,
    /// `-` when no layer is fully trainable.
    pub fully_trainable_layer: String,
    pub lora_dropout: f64,
}

/// The eight shipped recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestPreset {
    Bactrainus8B,
    Bactrainus8BCot8B,
    Bactrainus8BCot70B,
    Bactrainus70B,
    SingleStageSelector,
    ParagraphSelector,
    SentenceSelector,
    QuestionDecomposer,
}

impl ManifestPreset {
    pub fn all() -> [ManifestPreset; 8] {
        [
            ManifestPreset::Bactrainus8B,
            ManifestPreset::Bactrainus8BCot8B,
            ManifestPreset::Bactrainus8BCot70B,
            ManifestPreset::Bactrainus70B,
            ManifestPreset::SingleStageSelector,
            ManifestPreset::ParagraphSelector,
            ManifestPreset::SentenceSelector,
            ManifestPreset::QuestionDecomposer,
        ]
    }

    pub fn slug(&self) -> &'static str {
        match self {
            ManifestPreset::Bactrainus8B => "bactrainus-8b",
            ManifestPreset::Bactrainus8BCot8B => "bactrainus-8b-cot-8b",
            ManifestPreset::Bactrainus8BCot70B => "bactrainus-8b-cot-70b",
            ManifestPreset::Bactrainus70B => "bactrainus-70b",
            ManifestPreset::SingleStageSelector => "single-stage-selector",
            ManifestPreset::ParagraphSelector => "paragraph-selector",
            ManifestPreset::SentenceSelector => "sentence-selector",
            ManifestPreset::QuestionDecomposer => "question-decomposer",
        }
    }

    pub fn manifest(&self) -> TrainingManifest {
        let base = TrainingManifest {
            name: String::new(),
            base_model: "Llama 3.1 Instruct 8B".to_string(),
            data_points: 90564,
            training_steps: 2,
            batch_size: 8,
            gradient_accumulation_steps: 32,
            max_learning_rate: 1e-4,
            scheduler_type: "cosine".to_string(),
            warmup_ratio: 0.03,
            max_sequence_length: 512,
            lora_rank: 64,
            lora_alpha: 128,
            trainable_lora_weights: "QKVO, MLP".to_string(),
            fully_trainable_layer: "lm-head".to_string(),
            lora_dropout: 0.05,
        };
        match self {
            ManifestPreset::Bactrainus8B => TrainingManifest {
                name: "Bactrainus 8B".to_string(),
                ..base
            },
            ManifestPreset::Bactrainus8BCot8B => TrainingManifest {
                name: "Bactrainus 8B CoT (8B teacher)".to_string(),
                batch_size: 4,
                gradient_accumulation_steps: 16,
                max_sequence_length: 1024,
                ..base
            },
            ManifestPreset::Bactrainus8BCot70B => TrainingManifest {
                name: "Bactrainus 8B CoT (70B teacher)".to_string(),
                base_model: "Bactrainus 8B (1 epoch)".to_string(),
                data_points: 15661,
                training_steps: 1,
                batch_size: 4,
                gradient_accumulation_steps: 16,
                warmup_ratio: 0.1,
                max_sequence_length: 1024,
                lora_alpha: 32,
                ..base
            },
            ManifestPreset::Bactrainus70B => TrainingManifest {
                name: "Bactrainus 70B".to_string(),
                base_model: "Llama 3.1 Instruct 70B".to_string(),
                training_steps: 1,
                batch_size: 1,
                gradient_accumulation_steps: 8,
                lora_rank: 16,
                lora_alpha: 16,
                fully_trainable_layer: "-".to_string(),
                ..base
            },
            ManifestPreset::SingleStageSelector => TrainingManifest {
                name: "Single-Stage Selector".to_string(),
                batch_size: 2,
                gradient_accumulation_steps: 8,
                max_sequence_length: 4096,
                ..base
            },
            ManifestPreset::ParagraphSelector => TrainingManifest {
                name: "Paragraph Selector".to_string(),
                batch_size: 2,
                gradient_accumulation_steps: 8,
                max_sequence_length: 4096,
                ..base
            },
            ManifestPreset::SentenceSelector => TrainingManifest {
                name: "Sentence Selector".to_string(),
                batch_size: 4,
                gradient_accumulation_steps: 16,
                max_learning_rate: 2e-5,
                max_sequence_length: 1024,
                ..base
            },
            ManifestPreset::QuestionDecomposer => TrainingManifest {
                name: "Question Decomposer".to_string(),
                training_steps: 1,
                batch_size: 8,
                gradient_accumulation_steps: 32,
                max_learning_rate: 2e-5,
                max_sequence_length: 2048,
                lora_alpha: 32,
                ..base
            },
        }
    }
}

impl std::str::FromStr for ManifestPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ManifestPreset::all()
            .into_iter()
            .find(|p| p.slug() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = ManifestPreset::all().iter().map(|p| p.slug()).collect();
                format!("unknown manifest preset {s:?}; expected one of {known:?}")
            })
    }
}

/// Serializes one manifest as TOML.
pub fn manifest_toml(preset: ManifestPreset) -> Result<String, SftError> {
    Ok(toml::to_string(&preset.manifest())?)
}

/// Writes `<slug>.toml` into `dir` for each requested preset; returns the
/// written paths.
pub fn write_manifests(
    presets: &[ManifestPreset],
    dir: &Path,
) -> Result<Vec<std::path::PathBuf>, SftError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut paths = Vec::with_capacity(presets.len());
    for preset in presets {
        let path = dir.join(format!("{}.toml", preset.slug()));
        std::fs::write(&path, manifest_toml(*preset)?).map_err(|e| io_err(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
