//! Multi-hop question answering over the HotpotQA distractor setting.
//!
//! The crate is organized around a small number of pieces:
//!
//! * [`corpus`]: loading, validation, and indexing of HotpotQA-format JSON.
//! * [`metrics`]: answer, supporting-fact, and joint EM/F1 scoring.
//! * [`backend`]: pluggable text generation and embedding providers with a
//!   persistent response cache.
//! * [`prompting`]: prompt construction and model-output parsing for every
//!   stage role.
//! * [`pipeline`]: the six selector-reader topologies, traced end to end.
//! * [`experiments`]: the evaluation harness (ablations, sweeps, stratified
//!   reports, scenario matrix, prediction-file scoring).
//! * [`sftgen`]: supervised fine-tuning data export and training manifests.
//! * [`synth`]: deterministic schema-identical corpus generation for tests
//!   and offline runs.

pub mod backend;
pub mod corpus;
pub mod experiments;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod sftgen;
pub mod synth;

pub use backend::{Backend, BackendError, BackendSpec, ChatRequest, ChatResponse, GenerationParams};
pub use corpus::{
    CorpusIndex, HotpotExample, Level, Paragraph, QuestionType, SfBucket, SupportingFact,
};
pub use experiments::{ExperimentError, Table};
pub use metrics::{
    AnswerScore, ExampleScore, JointScore, MetricReport, MetricSummary, Prediction, SpScore,
};
pub use pipeline::{
    run_batch, run_example, PipelineConfig, PipelineError, RunRecord, ScenarioId, StageBackends,
};
pub use prompting::{PromptBuilder, PromptError, PromptProfile, ReaderInputMode, ShotPool};
pub use sftgen::{AlpacaRecord, ManifestPreset, SftError, SftTask, TrainingManifest};
pub use synth::{synth_corpus, synth_index};
