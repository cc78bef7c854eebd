//! The six selector-reader topologies, executed with full traces.
//!
//! A scenario is a fixed stage sequence. Each stage builds one prompt,
//! calls its backend, parses the reply, and hands state to the next stage.
//! Stage failures never abort an example: the failing stage is recorded
//! with its error, downstream stages run with whatever survived (possibly
//! nothing), and the example is scored honestly. Every scenario therefore
//! produces the same number of stage records for every example.
//!
//! Supporting-fact predictions always come from the last selector-family
//! stage; the reader only ever contributes the answer string.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{cache_key, Backend, ChatRequest, GenerationParams};
use crate::corpus::{HotpotExample, Paragraph, SupportingFact};
use crate::metrics::{
    aggregate, example_score, AnswerScore, ExampleScore, JointScore, MetricReport, Prediction,
    SpScore, Stratum,
};
use crate::prompting::{
    parse_decomposer_output, parse_reader_output, parse_selector_output, PromptBuilder,
    PromptProfile, PromptRole, ReaderEvidence, ReaderInputMode, SelectorVariant, ShotPool,
    SubQuestions,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode run record: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The six evaluated topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "S1_AllInOne")]
    S1AllInOne,
    #[serde(rename = "S2_SingleStage")]
    S2SingleStage,
    #[serde(rename = "S3_TwoStage_SF")]
    S3TwoStageSf,
    #[serde(rename = "S4_TwoStage_Gold")]
    S4TwoStageGold,
    #[serde(rename = "S5_TwoStageSubq_SF")]
    S5TwoStageSubqSf,
    #[serde(rename = "S6_TwoStageSubq_Gold")]
    S6TwoStageSubqGold,
}

impl ScenarioId {
    pub fn all() -> [ScenarioId; 6] {
        [
            ScenarioId::S1AllInOne,
            ScenarioId::S2SingleStage,
            ScenarioId::S3TwoStageSf,
            ScenarioId::S4TwoStageGold,
            ScenarioId::S5TwoStageSubqSf,
            ScenarioId::S6TwoStageSubqGold,
        ]
    }

    /// The long name, identical to the serialized form.
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioId::S1AllInOne => "S1_AllInOne",
            ScenarioId::S2SingleStage => "S2_SingleStage",
            ScenarioId::S3TwoStageSf => "S3_TwoStage_SF",
            ScenarioId::S4TwoStageGold => "S4_TwoStage_Gold",
            ScenarioId::S5TwoStageSubqSf => "S5_TwoStageSubq_SF",
            ScenarioId::S6TwoStageSubqGold => "S6_TwoStageSubq_Gold",
        }
    }

    pub fn short(&self) -> &'static str {
        match self {
            ScenarioId::S1AllInOne => "S1",
            ScenarioId::S2SingleStage => "S2",
            ScenarioId::S3TwoStageSf => "S3",
            ScenarioId::S4TwoStageGold => "S4",
            ScenarioId::S5TwoStageSubqSf => "S5",
            ScenarioId::S6TwoStageSubqGold => "S6",
        }
    }

    /// The fixed stage sequence this scenario executes.
    pub fn stages(&self) -> &'static [StageName] {
        match self {
            ScenarioId::S1AllInOne => &[StageName::AllInOne],
            ScenarioId::S2SingleStage => &[StageName::SingleStageSelector, StageName::Reader],
            ScenarioId::S3TwoStageSf | ScenarioId::S4TwoStageGold => &[
                StageName::ParagraphSelector,
                StageName::SentenceSelector,
                StageName::Reader,
            ],
            ScenarioId::S5TwoStageSubqSf | ScenarioId::S6TwoStageSubqGold => &[
                StageName::ParagraphSelector,
                StageName::Decomposer,
                StageName::SentenceSelector,
                StageName::Reader,
            ],
        }
    }

    /// How the reader stage receives evidence. `None` for the one-pass
    /// scenario, which has no separate reader.
    pub fn reader_mode(&self) -> Option<ReaderInputMode> {
        match self {
            ScenarioId::S1AllInOne => None,
            ScenarioId::S2SingleStage
            | ScenarioId::S3TwoStageSf
            | ScenarioId::S5TwoStageSubqSf => Some(ReaderInputMode::SupportingFacts),
            ScenarioId::S4TwoStageGold | ScenarioId::S6TwoStageSubqGold => {
                Some(ReaderInputMode::GoldOnly)
            }
        }
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.to_ascii_lowercase();
        for scenario in ScenarioId::all() {
            if lowered == scenario.short().to_ascii_lowercase()
                || lowered == scenario.name().to_ascii_lowercase()
            {
                return Ok(scenario);
            }
        }
        Err(format!(
            "unknown scenario {s:?}; expected S1..S6 or a full scenario name"
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    AllInOne,
    SingleStageSelector,
    ParagraphSelector,
    Decomposer,
    SentenceSelector,
    Reader,
}

impl std::fmt::Display for StageName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            StageName::AllInOne => "all_in_one",
            StageName::SingleStageSelector => "single_stage_selector",
            StageName::ParagraphSelector => "paragraph_selector",
            StageName::Decomposer => "decomposer",
            StageName::SentenceSelector => "sentence_selector",
            StageName::Reader => "reader",
        };
        f.write_str(name)
    }
}

/// What a stage's reply parsed into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageParse {
    Selector {
        titles: Vec<String>,
        facts: Vec<SupportingFact>,
    },
    SubQuestions {
        subs: Vec<String>,
    },
    Reader {
        answer: String,
        has_rationale: bool,
    },
    Empty,
}

/// One stage of one example: the request digest, the raw reply, and what
/// was made of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: StageName,
    /// Digest of the exact request; equals the response cache key.
    pub prompt_digest: String,
    pub raw_output: String,
    pub parsed: StageParse,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub latency_ms: u64,
    pub cache_hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StageRecord {
    fn degenerate(stage: StageName, error: impl Into<String>) -> StageRecord {
        StageRecord {
            stage,
            prompt_digest: String::new(),
            raw_output: String::new(),
            parsed: StageParse::Empty,
            warnings: Vec::new(),
            latency_ms: 0,
            cache_hit: false,
            error: Some(error.into()),
        }
    }
}

/// The full trace and scores for one example under one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub example_id: String,
    pub scenario: ScenarioId,
    pub label: String,
    pub stages: Vec<StageRecord>,
    pub prediction: Prediction,
    pub answer_score: AnswerScore,
    pub sp_score: SpScore,
    pub joint_score: JointScore,
}

/// Which backend serves which stage. The one-pass stage uses the reader
/// slot, since it is the stage that produces the answer.
#[derive(Debug, Clone, Default)]
pub struct StageBackends {
    pub selector: Option<Arc<Backend>>,
    pub sentence_selector: Option<Arc<Backend>>,
    pub decomposer: Option<Arc<Backend>>,
    pub reader: Option<Arc<Backend>>,
}

impl StageBackends {
    pub fn backend_for(&self, stage: StageName) -> Option<&Arc<Backend>> {
        match stage {
            StageName::AllInOne | StageName::Reader => self.reader.as_ref(),
            StageName::SingleStageSelector | StageName::ParagraphSelector => self.selector.as_ref(),
            StageName::Decomposer => self.decomposer.as_ref(),
            StageName::SentenceSelector => self.sentence_selector.as_ref(),
        }
    }
}

/// Everything a scenario run needs besides the examples themselves.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub scenario: ScenarioId,
    pub backends: StageBackends,
    /// Shot count and rationale settings for the reader stage. The input
    /// mode is dictated by the scenario and ignored here.
    pub reader_profile: PromptProfile,
    pub params: GenerationParams,
    /// Wall-clock budget per example, across all of its stages.
    pub timeout: Duration,
    pub label: String,
    pub shot_pool: Option<Arc<ShotPool>>,
    pub builder: PromptBuilder,
}

impl PipelineConfig {
    pub fn new(scenario: ScenarioId, backends: StageBackends) -> PipelineConfig {
        PipelineConfig {
            scenario,
            backends,
            reader_profile: PromptProfile::reader(
                scenario.reader_mode().unwrap_or(ReaderInputMode::AllParagraphs),
            ),
            params: GenerationParams::default(),
            timeout: Duration::from_secs(120),
            label: scenario.short().to_string(),
            shot_pool: None,
            builder: PromptBuilder::builtin(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.reader_profile.role != PromptRole::Reader {
            return Err(PipelineError::Config(format!(
                "reader profile has role {}, expected reader",
                self.reader_profile.role
            )));
        }
        self.reader_profile
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.reader_profile.shots > 0 && self.shot_pool.is_none() {
            return Err(PipelineError::Config(format!(
                "reader profile requests {} shots but no shot pool is configured",
                self.reader_profile.shots
            )));
        }
        self.params
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for &stage in self.scenario.stages() {
            match self.backends.backend_for(stage) {
                None => {
                    return Err(PipelineError::Config(format!(
                        "scenario {} needs a backend for stage {stage}",
                        self.scenario.short()
                    )));
                }
                Some(backend) if !backend.is_chat() => {
                    return Err(PipelineError::Config(format!(
                        "stage {stage} backend {} cannot generate text",
                        backend.kind_name()
                    )));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Paragraphs from `context` whose titles were selected, in context order.
fn paragraphs_by_title<'a>(context: &'a [Paragraph], titles: &[String]) -> Vec<&'a Paragraph> {
    context
        .iter()
        .filter(|p| titles.iter().any(|t| *t == p.title))
        .collect()
}

struct StageOutcome {
    record: StageRecord,
    titles: Option<Vec<String>>,
    facts: Option<Vec<SupportingFact>>,
    subs: Option<SubQuestions>,
    answer: Option<String>,
}

impl StageOutcome {
    fn only(record: StageRecord) -> StageOutcome {
        StageOutcome {
            record,
            titles: None,
            facts: None,
            subs: None,
            answer: None,
        }
    }
}

fn call_backend(
    backend: &Backend,
    stage: StageName,
    request: &ChatRequest,
) -> Result<(String, StageRecord), StageRecord> {
    let digest = cache_key(backend.kind_name(), request);
    match backend.generate(request) {
        Ok(response) => {
            let record = StageRecord {
                stage,
                prompt_digest: digest,
                raw_output: response.text.clone(),
                parsed: StageParse::Empty,
                warnings: Vec::new(),
                latency_ms: response.latency_ms,
                cache_hit: response.cache_hit,
                error: None,
            };
            Ok((response.text, record))
        }
        Err(err) => {
            let mut record = StageRecord::degenerate(stage, err.to_string());
            record.prompt_digest = digest;
            Err(record)
        }
    }
}

fn run_selector_stage(
    stage: StageName,
    example: &HotpotExample,
    config: &PipelineConfig,
    backend: &Backend,
    candidates: &[Paragraph],
    subs: Option<&SubQuestions>,
) -> StageOutcome {
    let variant = match stage {
        StageName::SingleStageSelector => SelectorVariant::SingleStage,
        StageName::ParagraphSelector => SelectorVariant::Paragraph,
        _ => SelectorVariant::Sentence,
    };
    let request = match config.builder.selector(
        example,
        variant,
        candidates,
        subs,
        &config.params,
        backend.model_id(),
    ) {
        Ok(request) => request,
        Err(err) => return StageOutcome::only(StageRecord::degenerate(stage, err.to_string())),
    };
    let (text, mut record) = match call_backend(backend, stage, &request) {
        Ok(pair) => pair,
        Err(record) => return StageOutcome::only(record),
    };
    match parse_selector_output(&text, candidates) {
        Ok(parsed) => {
            record.warnings = parsed.warnings;
            let mut titles = parsed.titles;
            if titles.is_empty() && !parsed.facts.is_empty() {
                let mut seen = BTreeSet::new();
                for fact in &parsed.facts {
                    if seen.insert(fact.title.clone()) {
                        titles.push(fact.title.clone());
                    }
                }
                record
                    .warnings
                    .push("no titles line; derived titles from facts".to_string());
            }
            record.parsed = StageParse::Selector {
                titles: titles.clone(),
                facts: parsed.facts.clone(),
            };
            StageOutcome {
                record,
                titles: Some(titles),
                facts: Some(parsed.facts),
                subs: None,
                answer: None,
            }
        }
        Err(err) => {
            record.error = Some(err.to_string());
            StageOutcome::only(record)
        }
    }
}

fn run_all_in_one_stage(
    example: &HotpotExample,
    config: &PipelineConfig,
    backend: &Backend,
) -> StageOutcome {
    let stage = StageName::AllInOne;
    let request = match config
        .builder
        .all_in_one(example, &config.params, backend.model_id())
    {
        Ok(request) => request,
        Err(err) => return StageOutcome::only(StageRecord::degenerate(stage, err.to_string())),
    };
    let (text, mut record) = match call_backend(backend, stage, &request) {
        Ok(pair) => pair,
        Err(record) => return StageOutcome::only(record),
    };
    let mut outcome_titles = None;
    let mut outcome_facts = None;
    let mut answer = None;
    let mut errors = Vec::new();
    match parse_selector_output(&text, &example.context) {
        Ok(parsed) => {
            record.warnings = parsed.warnings;
            record.parsed = StageParse::Selector {
                titles: parsed.titles.clone(),
                facts: parsed.facts.clone(),
            };
            outcome_titles = Some(parsed.titles);
            outcome_facts = Some(parsed.facts);
        }
        Err(err) => errors.push(format!("selection: {err}")),
    }
    match parse_reader_output(&text) {
        Ok(parsed) => {
            if parsed.no_marker {
                record
                    .warnings
                    .push("reply has no answer marker; using full text".to_string());
            }
            answer = Some(parsed.answer);
        }
        Err(err) => errors.push(format!("answer: {err}")),
    }
    if !errors.is_empty() {
        record.error = Some(errors.join("; "));
    }
    StageOutcome {
        record,
        titles: outcome_titles,
        facts: outcome_facts,
        subs: None,
        answer,
    }
}

fn run_decomposer_stage(
    example: &HotpotExample,
    config: &PipelineConfig,
    backend: &Backend,
) -> StageOutcome {
    let stage = StageName::Decomposer;
    let request = match config
        .builder
        .decomposer(example, &config.params, backend.model_id())
    {
        Ok(request) => request,
        Err(err) => return StageOutcome::only(StageRecord::degenerate(stage, err.to_string())),
    };
    let (text, mut record) = match call_backend(backend, stage, &request) {
        Ok(pair) => pair,
        Err(record) => return StageOutcome::only(record),
    };
    match parse_decomposer_output(&text, &example.question) {
        Ok((subs, warnings)) => {
            record.warnings = warnings;
            record.parsed = StageParse::SubQuestions {
                subs: subs.subs.clone(),
            };
            StageOutcome {
                record,
                titles: None,
                facts: None,
                subs: Some(subs),
                answer: None,
            }
        }
        Err(err) => {
            record.error = Some(err.to_string());
            StageOutcome::only(record)
        }
    }
}

fn run_reader_stage(
    example: &HotpotExample,
    config: &PipelineConfig,
    backend: &Backend,
    mode: ReaderInputMode,
    facts: &[SupportingFact],
    titles: &[String],
) -> StageOutcome {
    let stage = StageName::Reader;
    let mut warnings = Vec::new();
    let evidence = match mode {
        ReaderInputMode::GoldOnly => ReaderEvidence::Paragraphs(
            paragraphs_by_title(&example.context, titles)
                .into_iter()
                .cloned()
                .collect(),
        ),
        _ => {
            let mut pairs = Vec::new();
            for fact in facts {
                match example.resolve_fact(fact) {
                    Some(sentence) => pairs.push((fact.title.clone(), sentence.to_string())),
                    None => warnings.push(format!("cannot resolve predicted fact {fact}")),
                }
            }
            ReaderEvidence::Sentences(pairs)
        }
    };
    let profile = PromptProfile {
        role: PromptRole::Reader,
        shots: config.reader_profile.shots,
        cot: config.reader_profile.cot,
        reader_input_mode: mode,
    };
    let request = match config.builder.reader(
        example,
        &profile,
        &evidence,
        config.shot_pool.as_deref(),
        &config.params,
        backend.model_id(),
    ) {
        Ok(request) => request,
        Err(err) => return StageOutcome::only(StageRecord::degenerate(stage, err.to_string())),
    };
    let (text, mut record) = match call_backend(backend, stage, &request) {
        Ok(pair) => pair,
        Err(record) => return StageOutcome::only(record),
    };
    record.warnings = warnings;
    match parse_reader_output(&text) {
        Ok(parsed) => {
            if parsed.no_marker {
                record
                    .warnings
                    .push("reply has no answer marker; using full text".to_string());
            }
            record.parsed = StageParse::Reader {
                answer: parsed.answer.clone(),
                has_rationale: parsed.rationale.is_some(),
            };
            StageOutcome {
                record,
                titles: None,
                facts: None,
                subs: None,
                answer: Some(parsed.answer),
            }
        }
        Err(err) => {
            record.error = Some(err.to_string());
            StageOutcome::only(record)
        }
    }
}

/// Runs one example through the configured scenario. Never fails: stage
/// errors are recorded in the trace and the example is scored with
/// whatever was predicted.
pub fn run_example(example: &HotpotExample, config: &PipelineConfig) -> RunRecord {
    let deadline = Instant::now() + config.timeout;
    let mut stages: Vec<StageRecord> = Vec::with_capacity(config.scenario.stages().len());
    let mut titles: Vec<String> = Vec::new();
    let mut facts: Vec<SupportingFact> = Vec::new();
    let mut subs: Option<SubQuestions> = None;
    let mut answer: Option<String> = None;

    for &stage in config.scenario.stages() {
        if Instant::now() > deadline {
            stages.push(StageRecord::degenerate(stage, "example deadline exceeded"));
            continue;
        }
        let backend = match config.backends.backend_for(stage) {
            Some(backend) => backend,
            None => {
                stages.push(StageRecord::degenerate(stage, "no backend configured"));
                continue;
            }
        };
        let outcome = match stage {
            StageName::AllInOne => run_all_in_one_stage(example, config, backend),
            StageName::SingleStageSelector | StageName::ParagraphSelector => {
                run_selector_stage(stage, example, config, backend, &example.context, None)
            }
            StageName::Decomposer => run_decomposer_stage(example, config, backend),
            StageName::SentenceSelector => {
                let candidates: Vec<Paragraph> = paragraphs_by_title(&example.context, &titles)
                    .into_iter()
                    .cloned()
                    .collect();
                run_selector_stage(stage, example, config, backend, &candidates, subs.as_ref())
            }
            StageName::Reader => {
                let mode = config
                    .scenario
                    .reader_mode()
                    .unwrap_or(ReaderInputMode::SupportingFacts);
                run_reader_stage(example, config, backend, mode, &facts, &titles)
            }
        };
        if let Some(new_titles) = outcome.titles {
            titles = new_titles;
        }
        if let Some(new_facts) = outcome.facts {
            facts = new_facts;
        }
        if let Some(new_subs) = outcome.subs {
            subs = Some(new_subs);
        }
        if let Some(new_answer) = outcome.answer {
            answer = Some(new_answer);
        }
        stages.push(outcome.record);
    }

    let prediction = match answer {
        Some(answer) => Prediction::new(answer, facts),
        None => {
            let reason = stages
                .iter()
                .filter_map(|s| s.error.as_deref())
                .next()
                .unwrap_or("no stage produced an answer")
                .to_string();
            let mut prediction = Prediction::failed(reason);
            prediction.supporting_facts = facts;
            prediction
        }
    };
    let score = example_score(example, &prediction, Some(config.scenario.short()));
    RunRecord {
        example_id: example.id.clone(),
        scenario: config.scenario,
        label: config.label.clone(),
        stages,
        prediction,
        answer_score: score.answer,
        sp_score: score.sp,
        joint_score: score.joint,
    }
}

/// Rebuilds the stratified score entry for a stored record.
pub fn record_score(record: &RunRecord, example: &HotpotExample) -> ExampleScore {
    example_score(example, &record.prediction, Some(record.scenario.short()))
}

/// The merged result of a batch run.
#[derive(Debug)]
pub struct BatchOutcome {
    /// All records for the requested examples, sorted by example id.
    pub records: Vec<RunRecord>,
    pub scores: Vec<ExampleScore>,
    pub report: MetricReport,
    /// Records reused from an existing records file.
    pub reused: usize,
    /// Records freshly executed in this call.
    pub executed: usize,
}

fn read_existing_records(
    path: &Path,
    config: &PipelineConfig,
    wanted: &BTreeMap<&str, &HotpotExample>,
) -> Result<BTreeMap<String, RunRecord>, PipelineError> {
    let mut existing = BTreeMap::new();
    if !path.exists() {
        return Ok(existing);
    }
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = match serde_json::from_str(&line) {
            Ok(record) => record,
            Err(err) => {
                log::warn!(
                    "skipping unreadable record at {}:{}: {err}",
                    path.display(),
                    lineno + 1
                );
                continue;
            }
        };
        if record.scenario == config.scenario
            && record.label == config.label
            && wanted.contains_key(record.example_id.as_str())
        {
            existing.insert(record.example_id.clone(), record);
        }
    }
    Ok(existing)
}

/// Runs `examples` through the scenario, `parallelism` at a time. When
/// `records_path` is given, completed records are appended there as JSON
/// lines and records already present (same scenario and label) are reused
/// instead of re-executed, so an interrupted run picks up where it stopped.
pub fn run_batch(
    examples: &[HotpotExample],
    config: &PipelineConfig,
    parallelism: usize,
    records_path: Option<&Path>,
) -> Result<BatchOutcome, PipelineError> {
    config.validate()?;
    let by_id: BTreeMap<&str, &HotpotExample> =
        examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut existing = match records_path {
        Some(path) => read_existing_records(path, config, &by_id)?,
        None => BTreeMap::new(),
    };
    let todo: Vec<&HotpotExample> = examples
        .iter()
        .filter(|e| !existing.contains_key(&e.id))
        .collect();
    let reused = existing.len();
    let executed = todo.len();

    let writer = match records_path {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
                }
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| io_err(path, e))?;
            Some(Mutex::new(file))
        }
        None => None,
    };

    let fresh: Mutex<Vec<RunRecord>> = Mutex::new(Vec::with_capacity(todo.len()));
    let next = AtomicUsize::new(0);
    let write_error: Mutex<Option<PipelineError>> = Mutex::new(None);
    let workers = parallelism.max(1).min(todo.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= todo.len() {
                    break;
                }
                let record = run_example(todo[i], config);
                if let Some(writer) = &writer {
                    match serde_json::to_string(&record) {
                        Ok(line) => {
                            let mut file = writer.lock().expect("records writer poisoned");
                            if let Err(err) = file
                                .write_all(line.as_bytes())
                                .and_then(|_| file.write_all(b"\n"))
                            {
                                let mut slot = write_error.lock().expect("error slot poisoned");
                                if slot.is_none() {
                                    *slot = Some(io_err(
                                        records_path.expect("writer implies path"),
                                        err,
                                    ));
                                }
                            }
                        }
                        Err(err) => {
                            let mut slot = write_error.lock().expect("error slot poisoned");
                            if slot.is_none() {
                                *slot = Some(PipelineError::Json(err));
                            }
                        }
                    }
                }
                fresh.lock().expect("results poisoned").push(record);
            });
        }
    });
    if let Some(err) = write_error.into_inner().expect("error slot poisoned") {
        return Err(err);
    }

    for record in fresh.into_inner().expect("results poisoned") {
        existing.insert(record.example_id.clone(), record);
    }
    let records: Vec<RunRecord> = existing.into_values().collect();
    let scores: Vec<ExampleScore> = records
        .iter()
        .map(|record| {
            let example = by_id[record.example_id.as_str()];
            record_score(record, example)
        })
        .collect();
    let report = aggregate(&scores, &Stratum::all());
    Ok(BatchOutcome {
        records,
        scores,
        report,
        reused,
        executed,
    })
}
