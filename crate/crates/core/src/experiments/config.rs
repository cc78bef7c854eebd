//! Run configuration files.
//!
//! A run file is TOML: one scenario, its stage backends, generation
//! parameters, and the reader's prompt shape. A matrix file holds several
//! run sections, one per scenario. Everything has a default except the
//! scenario and the backends it needs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendSpec, Cache, GenerationParams};
use crate::corpus::CorpusIndex;
use crate::pipeline::{PipelineConfig, ScenarioId, StageBackends};
use crate::prompting::{
    PromptBuilder, PromptProfile, PromptRole, ReaderInputMode, ShotPool, TemplateSet,
};

use super::ExperimentError;

/// Generation parameter overrides. Unset fields keep their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<u32>,
    pub stop_sequences: Option<Vec<String>>,
    /// Per-example wall clock budget across stages.
    pub timeout_secs: Option<u64>,
}

impl ParamsConfig {
    pub fn to_params(&self, cot: bool) -> GenerationParams {
        let mut params = GenerationParams::default_for(cot);
        if let Some(v) = self.temperature {
            params.temperature = v;
        }
        if let Some(v) = self.top_p {
            params.top_p = v;
        }
        if let Some(v) = self.max_tokens {
            params.max_tokens = v;
        }
        if let Some(v) = &self.stop_sequences {
            params.stop_sequences = v.clone();
        }
        params
    }
}

/// Reader prompt-shape overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub shots: Option<usize>,
    pub cot: Option<bool>,
    pub reader_input_mode: Option<String>,
}

impl ProfileConfig {
    pub fn to_profile(&self, scenario: Option<ScenarioId>) -> Result<PromptProfile, ExperimentError> {
        let mode = match &self.reader_input_mode {
            Some(name) => name
                .parse::<ReaderInputMode>()
                .map_err(ExperimentError::Config)?,
            None => scenario
                .and_then(|s| s.reader_mode())
                .unwrap_or(ReaderInputMode::SupportingFacts),
        };
        Ok(PromptProfile {
            role: PromptRole::Reader,
            shots: self.shots.unwrap_or(0),
            cot: self.cot.unwrap_or(false),
            reader_input_mode: mode,
        })
    }
}

/// One scenario run, as written in a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFileConfig {
    pub scenario: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub profile: ProfileConfig,
    /// Keyed by stage slot: `selector`, `sentence_selector`, `decomposer`,
    /// `reader`. Unused slots may be omitted.
    #[serde(default)]
    pub backends: BTreeMap<String, BackendSpec>,
    /// Path to a shot pool JSON file; the built-in pool is used when shots
    /// are requested without one.
    #[serde(default)]
    pub shot_pool: Option<PathBuf>,
    /// Directory of template overrides.
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
}

pub const BACKEND_SLOTS: [&str; 4] = ["selector", "sentence_selector", "decomposer", "reader"];

/// Several runs in one file, usually one per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFileConfig {
    pub run: Vec<RunFileConfig>,
}

pub fn read_run_file(path: &Path) -> Result<RunFileConfig, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| super::io_err(path, e))?;
    Ok(toml::from_str(&text)?)
}

pub fn read_matrix_file(path: &Path) -> Result<MatrixFileConfig, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| super::io_err(path, e))?;
    Ok(toml::from_str(&text)?)
}

/// Instantiates the pipeline a run file describes. The corpus index is
/// needed whenever any backend is an oracle; the cache is shared across
/// all stages.
pub fn build_pipeline(
    config: &RunFileConfig,
    corpus: Option<Arc<CorpusIndex>>,
    cache: Cache,
) -> Result<PipelineConfig, ExperimentError> {
    let scenario: ScenarioId = config.scenario.parse().map_err(ExperimentError::Config)?;
    for slot in config.backends.keys() {
        if !BACKEND_SLOTS.contains(&slot.as_str()) {
            return Err(ExperimentError::Config(format!(
                "unknown backend slot {slot:?}; expected one of {BACKEND_SLOTS:?}"
            )));
        }
    }
    let build = |slot: &str| -> Result<Option<Arc<Backend>>, ExperimentError> {
        match config.backends.get(slot) {
            Some(spec) => {
                let backend = Backend::from_spec(spec, corpus.clone(), cache.clone())?;
                Ok(Some(Arc::new(backend)))
            }
            None => Ok(None),
        }
    };
    let backends = StageBackends {
        selector: build("selector")?,
        sentence_selector: build("sentence_selector")?,
        decomposer: build("decomposer")?,
        reader: build("reader")?,
    };
    let profile = config.profile.to_profile(Some(scenario))?;
    let params = config.params.to_params(profile.cot);
    let shot_pool = if profile.shots > 0 {
        let pool = match &config.shot_pool {
            Some(path) => ShotPool::from_file(path).map_err(|e| {
                ExperimentError::Config(format!("shot pool {}: {e}", path.display()))
            })?,
            None => ShotPool::builtin(),
        };
        Some(Arc::new(pool))
    } else {
        None
    };
    let builder = match &config.templates_dir {
        Some(dir) => PromptBuilder::new(TemplateSet::with_overrides(dir)?),
        None => PromptBuilder::builtin(),
    };
    let pipeline = PipelineConfig {
        scenario,
        backends,
        reader_profile: profile,
        params,
        timeout: Duration::from_secs(config.params.timeout_secs.unwrap_or(120)),
        label: config
            .label
            .clone()
            .unwrap_or_else(|| scenario.short().to_string()),
        shot_pool,
        builder,
    };
    pipeline.validate()?;
    Ok(pipeline)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUN_TOML: &str = r#"
scenario = "S3"
label = "oracle-smoke"

[params]
temperature = 0.2
max_tokens = 256
timeout_secs = 30

[profile]
shots = 2

[backends.selector]
kind = "oracle_selector"

[backends.sentence_selector]
kind = "oracle_selector"

[backends.reader]
kind = "oracle_reader"
"#;

    #[test]
    fn run_file_round_trips_and_builds() {
        let parsed: RunFileConfig = toml::from_str(RUN_TOML).unwrap();
        let text = toml::to_string(&parsed).unwrap();
        let back: RunFileConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, parsed);

        let corpus = Arc::new(crate::synth::synth_index(4, 2));
        let pipeline = build_pipeline(&parsed, Some(corpus), Cache::in_memory()).unwrap();
        assert_eq!(pipeline.scenario, ScenarioId::S3TwoStageSf);
        assert_eq!(pipeline.label, "oracle-smoke");
        assert_eq!(pipeline.params.temperature, 0.2);
        assert_eq!(pipeline.params.max_tokens, 256);
        assert_eq!(pipeline.timeout, Duration::from_secs(30));
        assert_eq!(pipeline.reader_profile.shots, 2);
        assert!(pipeline.shot_pool.is_some());
        assert_eq!(
            pipeline.reader_profile.reader_input_mode,
            ReaderInputMode::SupportingFacts
        );
    }

    #[test]
    fn missing_required_backend_fails_validation() {
        let config: RunFileConfig = toml::from_str(
            "scenario = \"S2\"\n[backends.selector]\nkind = \"oracle_selector\"\n",
        )
        .unwrap();
        let corpus = Arc::new(crate::synth::synth_index(2, 2));
        let err = build_pipeline(&config, Some(corpus), Cache::in_memory()).unwrap_err();
        assert!(err.to_string().contains("reader"), "{err}");
    }

    #[test]
    fn unknown_slot_is_rejected() {
        let config: RunFileConfig = toml::from_str(
            "scenario = \"S2\"\n[backends.writer]\nkind = \"oracle_reader\"\n",
        )
        .unwrap();
        let err = build_pipeline(&config, None, Cache::in_memory()).unwrap_err();
        assert!(err.to_string().contains("writer"), "{err}");
    }

    #[test]
    fn oracle_without_corpus_fails() {
        let config: RunFileConfig = toml::from_str(
            "scenario = \"S2\"\n[backends.selector]\nkind = \"oracle_selector\"\n[backends.reader]\nkind = \"oracle_reader\"\n",
        )
        .unwrap();
        assert!(build_pipeline(&config, None, Cache::in_memory()).is_err());
    }

    #[test]
    fn gold_scenarios_default_to_gold_mode() {
        let profile = ProfileConfig::default()
            .to_profile(Some(ScenarioId::S4TwoStageGold))
            .unwrap();
        assert_eq!(profile.reader_input_mode, ReaderInputMode::GoldOnly);
        let explicit = ProfileConfig {
            reader_input_mode: Some("all_paragraphs".to_string()),
            ..Default::default()
        };
        let profile = explicit.to_profile(None).unwrap();
        assert_eq!(profile.reader_input_mode, ReaderInputMode::AllParagraphs);
    }

    #[test]
    fn matrix_file_parses_multiple_runs() {
        let text = r#"
[[run]]
scenario = "S1"
[run.backends.reader]
kind = "oracle_reader"

[[run]]
scenario = "S2"
[run.backends.selector]
kind = "oracle_selector"
[run.backends.reader]
kind = "oracle_reader"
"#;
        let matrix: MatrixFileConfig = toml::from_str(text).unwrap();
        assert_eq!(matrix.run.len(), 2);
        assert_eq!(matrix.run[0].scenario, "S1");
    }
}
