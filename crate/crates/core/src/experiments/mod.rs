//! The evaluation harness: sampling, ablations, sweeps, stratified
//! reports, the scenario matrix, and external prediction scoring.
//!
//! Every operation is deterministic given its inputs and seed: samples are
//! drawn from id-sorted corpora, distractors rank with stable tie-breaks,
//! and all tables come from [`reports::Table`], which emits identical
//! bytes for identical results.

pub mod config;
pub mod distractors;
pub mod reports;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, GenerationParams};
use crate::corpus::{gold_paragraphs, HotpotExample, SupportingFact};
use crate::metrics::{
    aggregate, example_score, summarize, ExampleScore, MetricReport, MetricSummary, Prediction,
    Stratum,
};
use crate::pipeline::{run_batch, BatchOutcome, PipelineConfig, PipelineError, ScenarioId};
use crate::prompting::{
    parse_reader_output, PromptBuilder, PromptError, PromptProfile, PromptRole, ReaderEvidence,
    ReaderInputMode, ShotPool, VALID_SHOT_COUNTS,
};

pub use config::{
    build_pipeline, read_matrix_file, read_run_file, MatrixFileConfig, ParamsConfig,
    ProfileConfig, RunFileConfig,
};
pub use distractors::{select_distractors, DistractorChoice};
pub use reports::{metric_rows, pct, pct_opt, ReportError, Table, ABSENT};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot parse TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Report(#[from] ReportError),
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Draws a fixed-size sample. The corpus is id-sorted before the seeded
/// shuffle, so the sample depends only on the ids present, the seed, and
/// the limit, never on input order. The result is id-sorted again.
pub fn sample_corpus(
    examples: &[HotpotExample],
    limit: Option<usize>,
    seed: u64,
) -> Vec<HotpotExample> {
    let mut out: Vec<HotpotExample> = examples.to_vec();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(n) = limit {
        if n < out.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            out.shuffle(&mut rng);
            out.truncate(n);
            out.sort_by(|a, b| a.id.cmp(&b.id));
        }
    }
    out
}

/// Gold supporting-fact sentences as (title, sentence) pairs, skipping
/// any that do not resolve.
fn gold_fact_sentences(example: &HotpotExample) -> Vec<(String, String)> {
    example
        .supporting_facts
        .iter()
        .filter_map(|sf| {
            example
                .resolve_fact(sf)
                .map(|s| (sf.title.clone(), s.to_string()))
        })
        .collect()
}

fn reader_evidence(
    example: &HotpotExample,
    mode: ReaderInputMode,
    distractors: Option<&BTreeMap<String, Vec<String>>>,
) -> Result<ReaderEvidence, ExperimentError> {
    Ok(match mode {
        ReaderInputMode::QuestionOnly => ReaderEvidence::None,
        ReaderInputMode::SupportingFacts => {
            ReaderEvidence::Sentences(gold_fact_sentences(example))
        }
        ReaderInputMode::GoldOnly => ReaderEvidence::Paragraphs(
            gold_paragraphs(example).into_iter().cloned().collect(),
        ),
        ReaderInputMode::GoldPlus2Distractors => {
            let chosen = distractors
                .and_then(|map| map.get(&example.id))
                .ok_or_else(|| {
                    ExperimentError::Config(format!(
                        "no distractor choice for example {}",
                        example.id
                    ))
                })?;
            let mut titles: BTreeSet<&str> = gold_paragraphs(example)
                .iter()
                .map(|p| p.title.as_str())
                .collect();
            titles.extend(chosen.iter().map(String::as_str));
            ReaderEvidence::Paragraphs(
                example
                    .context
                    .iter()
                    .filter(|p| titles.contains(p.title.as_str()))
                    .cloned()
                    .collect(),
            )
        }
        ReaderInputMode::AllParagraphs => ReaderEvidence::Paragraphs(example.context.clone()),
    })
}

/// Runs the reader alone over `examples` under one input condition and
/// scores the answers. Supporting facts are not predicted here, so only
/// the answer means of the result are meaningful. Backend and parse
/// failures score as failed predictions rather than aborting the batch.
pub fn run_reader_condition(
    examples: &[HotpotExample],
    reader: &Backend,
    builder: &PromptBuilder,
    pool: Option<&ShotPool>,
    profile: &PromptProfile,
    params: &GenerationParams,
    distractors: Option<&BTreeMap<String, Vec<String>>>,
    parallelism: usize,
) -> Result<Vec<ExampleScore>, ExperimentError> {
    if profile.role != PromptRole::Reader {
        return Err(ExperimentError::Config(format!(
            "reader condition needs a reader profile, got role {}",
            profile.role
        )));
    }
    profile.validate()?;
    if profile.shots > 0 && pool.is_none() {
        return Err(ExperimentError::Config(format!(
            "{} shots requested without a shot pool",
            profile.shots
        )));
    }
    let evidences: Vec<ReaderEvidence> = examples
        .iter()
        .map(|ex| reader_evidence(ex, profile.reader_input_mode, distractors))
        .collect::<Result<_, _>>()?;

    let slots: Mutex<Vec<Option<ExampleScore>>> = Mutex::new(vec![None; examples.len()]);
    let next = AtomicUsize::new(0);
    let workers = parallelism.max(1).min(examples.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= examples.len() {
                    break;
                }
                let example = &examples[i];
                let prediction = match builder.reader(
                    example,
                    profile,
                    &evidences[i],
                    pool,
                    params,
                    reader.model_id(),
                ) {
                    Ok(request) => match reader.generate(&request) {
                        Ok(response) => match parse_reader_output(&response.text) {
                            Ok(parsed) => Prediction::new(parsed.answer, Vec::new()),
                            Err(err) => Prediction::failed(err.to_string()),
                        },
                        Err(err) => Prediction::failed(err.to_string()),
                    },
                    Err(err) => Prediction::failed(err.to_string()),
                };
                let score = example_score(example, &prediction, None);
                slots.lock().expect("score slots poisoned")[i] = Some(score);
            });
        }
    });
    Ok(slots
        .into_inner()
        .expect("score slots poisoned")
        .into_iter()
        .map(|s| s.expect("every example scored"))
        .collect())
}

/// The reader input ablation: one sample, five input conditions.
#[derive(Debug)]
pub struct AblationOutcome {
    pub per_condition: BTreeMap<ReaderInputMode, Vec<ExampleScore>>,
    pub distractors: Vec<DistractorChoice>,
    pub table: Table,
}

/// Runs all five reader input conditions over the same examples.
/// Distractors are ranked once per example and reused.
#[allow(clippy::too_many_arguments)]
pub fn ablate_inputs(
    examples: &[HotpotExample],
    reader: &Backend,
    embedder: &Backend,
    builder: &PromptBuilder,
    pool: Option<&ShotPool>,
    profile: &PromptProfile,
    params: &GenerationParams,
    parallelism: usize,
) -> Result<AblationOutcome, ExperimentError> {
    let choices: Vec<DistractorChoice> = examples
        .iter()
        .map(|ex| select_distractors(ex, embedder, 2))
        .collect::<Result<_, _>>()?;
    let distractor_map: BTreeMap<String, Vec<String>> = choices
        .iter()
        .map(|c| (c.example_id.clone(), c.chosen.clone()))
        .collect();

    let mut per_condition = BTreeMap::new();
    for mode in ReaderInputMode::all() {
        let mut condition_profile = profile.clone();
        condition_profile.reader_input_mode = mode;
        let scores = run_reader_condition(
            examples,
            reader,
            builder,
            pool,
            &condition_profile,
            params,
            Some(&distractor_map),
            parallelism,
        )?;
        per_condition.insert(mode, scores);
    }

    let mut header = vec!["Measure".to_string()];
    header.extend(ReaderInputMode::all().iter().map(|m| m.label().to_string()));
    let mut table = Table::new(header);
    let summaries: BTreeMap<ReaderInputMode, MetricSummary> = per_condition
        .iter()
        .map(|(mode, scores)| {
            let refs: Vec<&ExampleScore> = scores.iter().collect();
            (*mode, summarize(&refs))
        })
        .collect();
    for (name, pick) in [
        ("Answer EM", (|m: &crate::metrics::ScoreMeans| m.em) as fn(&crate::metrics::ScoreMeans) -> f64),
        ("Answer F1", |m: &crate::metrics::ScoreMeans| m.f1),
    ] {
        let mut row = vec![name.to_string()];
        for mode in ReaderInputMode::all() {
            row.push(pct_opt(summaries[&mode].answer.as_ref(), pick));
        }
        table.push(row);
    }
    Ok(AblationOutcome {
        per_condition,
        distractors: choices,
        table,
    })
}

/// The shots-by-rationale grid over one sample.
#[derive(Debug)]
pub struct SweepOutcome {
    /// Keyed by (chain of thought, shot count).
    pub cells: BTreeMap<(bool, usize), MetricSummary>,
    pub table: Table,
}

fn shot_label(shots: usize) -> String {
    match shots {
        0 => "Zero-shot".to_string(),
        n => format!("{n}-shot"),
    }
}

/// Runs the reader at every shot count, with and without rationales, over
/// gold supporting-fact evidence. Rationale cells get at least the longer
/// default generation budget.
pub fn fewshot_sweep(
    examples: &[HotpotExample],
    reader: &Backend,
    builder: &PromptBuilder,
    pool: &ShotPool,
    params: &GenerationParams,
    parallelism: usize,
) -> Result<SweepOutcome, ExperimentError> {
    let mut cells = BTreeMap::new();
    for cot in [false, true] {
        for shots in VALID_SHOT_COUNTS {
            let profile = PromptProfile {
                role: PromptRole::Reader,
                shots,
                cot,
                reader_input_mode: ReaderInputMode::SupportingFacts,
            };
            let mut cell_params = params.clone();
            if cot {
                cell_params.max_tokens = cell_params
                    .max_tokens
                    .max(GenerationParams::default_for(true).max_tokens);
            }
            let scores = run_reader_condition(
                examples,
                reader,
                builder,
                Some(pool),
                &profile,
                &cell_params,
                None,
                parallelism,
            )?;
            let refs: Vec<&ExampleScore> = scores.iter().collect();
            cells.insert((cot, shots), summarize(&refs));
        }
    }

    let mut header = vec!["CoT".to_string(), "Measure".to_string()];
    header.extend(VALID_SHOT_COUNTS.iter().map(|&s| shot_label(s)));
    let mut table = Table::new(header);
    for cot in [false, true] {
        for (name, pick) in [
            ("Answer EM", (|m: &crate::metrics::ScoreMeans| m.em) as fn(&crate::metrics::ScoreMeans) -> f64),
            ("Answer F1", |m: &crate::metrics::ScoreMeans| m.f1),
        ] {
            let mut row = vec![
                if cot { "yes" } else { "no" }.to_string(),
                name.to_string(),
            ];
            for shots in VALID_SHOT_COUNTS {
                row.push(pct_opt(cells[&(cot, shots)].answer.as_ref(), pick));
            }
            table.push(row);
        }
    }
    Ok(SweepOutcome { cells, table })
}

/// Preferred column order for stratified tables; groups not listed keep
/// their alphabetical position at the end.
fn group_order(stratum: Stratum) -> &'static [&'static str] {
    match stratum {
        Stratum::SfBucket => &["two", "three", "four_plus"],
        Stratum::Level => &["easy", "medium", "hard"],
        Stratum::QType => &["bridge", "comparison"],
        Stratum::Scenario => &[],
    }
}

/// Breaks scores down by one stratum: a count row plus the six standard
/// metric rows, one column per group.
pub fn stratify_scores(scores: &[ExampleScore], stratum: Stratum) -> Table {
    let report = aggregate(scores, &[stratum]);
    let groups = report
        .strata
        .get(stratum.name())
        .cloned()
        .unwrap_or_default();
    let preferred = group_order(stratum);
    let mut keys: Vec<&String> = groups.keys().collect();
    keys.sort_by_key(|k| {
        (
            preferred
                .iter()
                .position(|p| p == k)
                .unwrap_or(preferred.len()),
            k.as_str().to_string(),
        )
    });

    let mut header = vec!["Metric".to_string()];
    header.extend(keys.iter().map(|k| k.to_string()));
    let mut table = Table::new(header);
    let mut count_row = vec!["Count".to_string()];
    for key in &keys {
        count_row.push(groups[*key].count.to_string());
    }
    table.push(count_row);
    for i in 0..6 {
        let name = metric_rows(&MetricSummary::empty())[i].0;
        let mut row = vec![name.to_string()];
        for key in &keys {
            row.push(metric_rows(&groups[*key])[i].1.clone());
        }
        table.push(row);
    }
    table
}

/// One row per scenario run: the overall supporting-fact, answer, and
/// joint means.
#[derive(Debug)]
pub struct MatrixOutcome {
    pub runs: Vec<(ScenarioId, BatchOutcome)>,
    pub table: Table,
}

/// Runs each configured scenario over the same examples. With a records
/// directory, each scenario appends to `records-<short>.jsonl` there and
/// resumes from it.
pub fn scenario_matrix(
    examples: &[HotpotExample],
    configs: &[PipelineConfig],
    parallelism: usize,
    records_dir: Option<&Path>,
) -> Result<MatrixOutcome, ExperimentError> {
    let mut ordered: Vec<&PipelineConfig> = configs.iter().collect();
    ordered.sort_by_key(|c| c.scenario);
    let mut runs = Vec::with_capacity(ordered.len());
    for config in ordered {
        let records_path =
            records_dir.map(|dir| dir.join(format!("records-{}.jsonl", config.scenario.short())));
        let outcome = run_batch(examples, config, parallelism, records_path.as_deref())?;
        runs.push((config.scenario, outcome));
    }

    let mut table = Table::new(
        [
            "Scenario", "Reader", "SF EM", "SF F1", "Answer EM", "Answer F1", "Joint EM",
            "Joint F1",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    for (scenario, outcome) in &runs {
        let overall = &outcome.report.overall;
        table.push(vec![
            scenario.short().to_string(),
            scenario
                .reader_mode()
                .map(|m| m.label().to_string())
                .unwrap_or_else(|| ABSENT.to_string()),
            pct_opt(overall.sp.as_ref(), |m| m.em),
            pct_opt(overall.sp.as_ref(), |m| m.f1),
            pct_opt(overall.answer.as_ref(), |m| m.em),
            pct_opt(overall.answer.as_ref(), |m| m.f1),
            pct_opt(overall.joint.as_ref(), |m| m.em),
            pct_opt(overall.joint.as_ref(), |m| m.f1),
        ]);
    }
    Ok(MatrixOutcome { runs, table })
}

/// An externally produced prediction set: answers and supporting facts
/// keyed by example id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    #[serde(default)]
    pub answer: BTreeMap<String, String>,
    #[serde(default)]
    pub sp: BTreeMap<String, Vec<(String, usize)>>,
}

pub fn load_prediction_file(path: &Path) -> Result<PredictionFile, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Prediction-file scoring output.
#[derive(Debug)]
pub struct ScoredPredictions {
    pub scores: Vec<ExampleScore>,
    pub report: MetricReport,
    pub warnings: Vec<String>,
}

/// Scores an external prediction file against the corpus. Examples with
/// no entry score zero and produce a warning, as do entries whose ids are
/// not in the corpus.
pub fn score_prediction_file(
    examples: &[HotpotExample],
    predictions: &PredictionFile,
) -> ScoredPredictions {
    let mut warnings = Vec::new();
    let mut scores = Vec::with_capacity(examples.len());
    for example in examples {
        let answer = match predictions.answer.get(&example.id) {
            Some(answer) => answer.clone(),
            None => {
                warnings.push(format!("no answer prediction for {}", example.id));
                String::new()
            }
        };
        let sp: Vec<SupportingFact> = match predictions.sp.get(&example.id) {
            Some(pairs) => pairs
                .iter()
                .map(|(title, idx)| SupportingFact::new(title.clone(), *idx))
                .collect(),
            None => {
                warnings.push(format!("no supporting-fact prediction for {}", example.id));
                Vec::new()
            }
        };
        let prediction = Prediction::new(answer, sp);
        scores.push(example_score(example, &prediction, None));
    }
    let known: BTreeSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    let mut extra: BTreeSet<&String> = BTreeSet::new();
    extra.extend(predictions.answer.keys().filter(|k| !known.contains(k.as_str())));
    extra.extend(predictions.sp.keys().filter(|k| !known.contains(k.as_str())));
    for id in extra {
        warnings.push(format!("prediction for unknown example {id}"));
    }
    let report = aggregate(&scores, &Stratum::all());
    ScoredPredictions {
        scores,
        report,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptRule;
    use crate::pipeline::StageBackends;
    use crate::synth::{synth_corpus, synth_index};
    use std::sync::Arc;

    /// A reader that answers correctly only when the key gold sentence is
    /// present in its prompt.
    fn evidence_sensitive_reader(corpus: &[HotpotExample]) -> Backend {
        let mut rules: Vec<ScriptRule> = corpus
            .iter()
            .map(|ex| {
                let phrase = format!("the key detail is {}.", ex.answer);
                ScriptRule::Regex {
                    pattern: regex::escape(&phrase),
                    reply: format!("Answer: {}", ex.answer),
                }
            })
            .collect();
        rules.push(ScriptRule::Regex {
            pattern: ".*".to_string(),
            reply: "Answer: unknown".to_string(),
        });
        Backend::scripted(rules).unwrap()
    }

    #[test]
    fn sampling_is_deterministic_and_order_invariant() {
        let corpus = synth_corpus(30, 1);
        let mut reversed = corpus.clone();
        reversed.reverse();
        let a = sample_corpus(&corpus, Some(10), 42);
        let b = sample_corpus(&reversed, Some(10), 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let c = sample_corpus(&corpus, Some(10), 43);
        assert_ne!(a, c);
        let all = sample_corpus(&corpus, None, 42);
        assert_eq!(all.len(), 30);
        assert!(all.windows(2).all(|w| w[0].id < w[1].id));
    }

    #[test]
    fn ablation_separates_evidence_from_no_evidence() {
        let corpus = synth_corpus(12, 7);
        let reader = evidence_sensitive_reader(&corpus);
        let embedder = Backend::mock_embed();
        let builder = PromptBuilder::builtin();
        let profile = PromptProfile::reader(ReaderInputMode::QuestionOnly);
        let outcome = ablate_inputs(
            &corpus,
            &reader,
            &embedder,
            &builder,
            None,
            &profile,
            &GenerationParams::default(),
            4,
        )
        .unwrap();
        assert_eq!(outcome.table.header.len(), 6);
        assert_eq!(outcome.table.rows.len(), 2);
        let em_row = &outcome.table.rows[0];
        assert_eq!(em_row[0], "Answer EM");
        assert_eq!(em_row[1], "0.00");
        for cell in &em_row[2..] {
            assert_eq!(cell, "100.00");
        }
        assert_eq!(outcome.distractors.len(), 12);
        for choice in &outcome.distractors {
            assert_eq!(choice.chosen.len(), 2);
        }
    }

    #[test]
    fn sweep_covers_the_full_grid() {
        let corpus = synth_corpus(6, 13);
        let index = Arc::new(synth_index(6, 13));
        let reader = Backend::oracle_reader(index);
        let builder = PromptBuilder::builtin();
        let pool = ShotPool::builtin();
        let outcome = fewshot_sweep(
            &corpus,
            &reader,
            &builder,
            &pool,
            &GenerationParams::default(),
            3,
        )
        .unwrap();
        assert_eq!(outcome.cells.len(), 10);
        assert_eq!(outcome.table.rows.len(), 4);
        assert_eq!(outcome.table.header.len(), 7);
        for summary in outcome.cells.values() {
            assert_eq!(summary.count, 6);
            assert_eq!(summary.answer.as_ref().unwrap().em, 1.0);
        }
        let parsed = Table::parse(&outcome.table.emit()).unwrap();
        assert_eq!(parsed.emit(), outcome.table.emit());
    }

    #[test]
    fn stratified_table_orders_groups_semantically() {
        let corpus = synth_corpus(24, 19);
        let predictions: Vec<ExampleScore> = corpus
            .iter()
            .map(|ex| {
                let prediction = Prediction::new(ex.answer.clone(), ex.supporting_facts.clone());
                example_score(ex, &prediction, None)
            })
            .collect();
        let table = stratify_scores(&predictions, Stratum::SfBucket);
        assert_eq!(
            table.header,
            vec!["Metric", "two", "three", "four_plus"]
        );
        assert_eq!(table.rows[0][0], "Count");
        let total: usize = table.rows[0][1..]
            .iter()
            .map(|c| c.parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 24);
        for row in &table.rows[1..] {
            for cell in &row[1..] {
                assert_eq!(cell, "100.00");
            }
        }
        let by_level = stratify_scores(&predictions, Stratum::Level);
        assert_eq!(by_level.header, vec!["Metric", "easy", "medium", "hard"]);
    }

    #[test]
    fn matrix_runs_each_scenario_once() {
        let corpus = synth_corpus(8, 3);
        let index = Arc::new(synth_index(8, 3));
        let selector = Arc::new(Backend::oracle_selector(Arc::clone(&index)));
        let reader = Arc::new(Backend::oracle_reader(Arc::clone(&index)));
        let configs: Vec<PipelineConfig> = [ScenarioId::S3TwoStageSf, ScenarioId::S2SingleStage]
            .iter()
            .map(|&scenario| {
                PipelineConfig::new(
                    scenario,
                    StageBackends {
                        selector: Some(Arc::clone(&selector)),
                        sentence_selector: Some(Arc::clone(&selector)),
                        decomposer: None,
                        reader: Some(Arc::clone(&reader)),
                    },
                )
            })
            .collect();
        let outcome = scenario_matrix(&corpus, &configs, 2, None).unwrap();
        assert_eq!(outcome.runs.len(), 2);
        assert_eq!(outcome.runs[0].0, ScenarioId::S2SingleStage);
        assert_eq!(outcome.table.rows.len(), 2);
        assert_eq!(outcome.table.rows[0][0], "S2");
        assert_eq!(outcome.table.rows[0][1], "Supporting Facts");
        assert_eq!(outcome.table.rows[1][0], "S3");
        for row in &outcome.table.rows {
            for cell in &row[2..] {
                assert_eq!(cell, "100.00");
            }
        }
    }

    #[test]
    fn prediction_file_scoring_warns_and_scores_zero_for_missing() {
        let corpus = synth_corpus(4, 5);
        let mut file = PredictionFile {
            answer: BTreeMap::new(),
            sp: BTreeMap::new(),
        };
        for ex in &corpus[..2] {
            file.answer.insert(ex.id.clone(), ex.answer.clone());
            file.sp.insert(
                ex.id.clone(),
                ex.supporting_facts
                    .iter()
                    .map(|sf| (sf.title.clone(), sf.sentence_index))
                    .collect(),
            );
        }
        file.answer.insert("ghost".to_string(), "x".to_string());
        let scored = score_prediction_file(&corpus, &file);
        assert_eq!(scored.scores.len(), 4);
        let overall = scored.report.overall.answer.as_ref().unwrap();
        assert_eq!(overall.em, 0.5);
        // Two missing answers, two missing sp entries, one unknown id.
        assert_eq!(scored.warnings.len(), 5);
        assert!(scored.warnings.iter().any(|w| w.contains("ghost")));
    }

    #[test]
    fn prediction_file_json_shape_is_the_external_one() {
        let text = r#"{
            "answer": {"a1": "yes"},
            "sp": {"a1": [["Some Title", 0], ["Other", 2]]}
        }"#;
        let file: PredictionFile = serde_json::from_str(text).unwrap();
        assert_eq!(file.answer["a1"], "yes");
        assert_eq!(file.sp["a1"][1], ("Other".to_string(), 2));
    }
}
