//! One function per subcommand. Each loads what it needs, runs the core
//! operation, prints the human-readable table, and writes machine-readable
//! outputs under the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use mhqa_core::backend::{Backend, Cache};
use mhqa_core::corpus::{
    corpus_stats, load_corpus_with_mode, save_corpus, CorpusIndex, HotpotExample, Split,
    ValidationMode,
};
use mhqa_core::experiments::{
    ablate_inputs, build_pipeline, fewshot_sweep, load_prediction_file, metric_rows,
    read_matrix_file, read_run_file, sample_corpus, scenario_matrix, score_prediction_file,
    select_distractors, stratify_scores, RunFileConfig, Table,
};
use mhqa_core::metrics::{example_score, summarize, ExampleScore, MetricSummary, Stratum};
use mhqa_core::pipeline::{run_batch, RunRecord};
use mhqa_core::prompting::{PromptBuilder, ShotPool, TemplateSet};
use mhqa_core::sftgen::{
    gen_cot_targets, write_alpaca, write_manifests, CotFilter, CotTarget, ManifestPreset,
    SftSources, SftTask,
};
use mhqa_core::synth::synth_corpus;

use crate::{CorpusArgs, OutArgs, RunArgs};

fn parse_split(name: &str) -> Result<Split> {
    match name.to_ascii_lowercase().as_str() {
        "train" => Ok(Split::Train),
        "dev" => Ok(Split::Dev),
        other => bail!("unknown split {other:?}; expected train or dev"),
    }
}

/// Loads the corpus per the common flags: validation mode, then an
/// id-stable fixed-seed sample when a limit is set.
fn load(args: &CorpusArgs) -> Result<Vec<HotpotExample>> {
    let split = parse_split(&args.split)?;
    let mode = if args.strict {
        ValidationMode::Strict
    } else {
        ValidationMode::FlagAndKeep
    };
    let loaded = load_corpus_with_mode(&args.corpus, split, mode)
        .with_context(|| format!("loading corpus {}", args.corpus.display()))?;
    for err in &loaded.record_errors {
        log::warn!("corpus record {}: {}", err.index, err.message);
    }
    if loaded.dropped_flagged > 0 {
        log::info!("dropped {} flagged examples (strict mode)", loaded.dropped_flagged);
    }
    let examples = sample_corpus(&loaded.examples, args.limit, args.seed);
    if examples.is_empty() {
        bail!("no usable examples in {}", args.corpus.display());
    }
    log::info!("selected {} of {} examples", examples.len(), loaded.examples.len());
    Ok(examples)
}

fn cache_for(run: &RunArgs) -> Cache {
    match (&run.cache_dir, run.no_cache) {
        (_, true) => Cache::disabled(),
        (Some(dir), false) => Cache::persistent(dir),
        (None, false) => Cache::from_env(false),
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn summary_table(summary: &MetricSummary) -> Table {
    let mut table = Table::new(vec!["Measure".to_string(), "Value".to_string()]);
    table.push(vec!["Examples".to_string(), summary.count.to_string()]);
    for (name, value) in metric_rows(summary) {
        table.push(vec![name.to_string(), value]);
    }
    table
}

fn read_config(path: &Path) -> Result<RunFileConfig> {
    read_run_file(path).with_context(|| format!("reading run config {}", path.display()))
}

/// Builds one named backend from a run config's backend map.
fn backend_from_slot(
    config: &RunFileConfig,
    slot: &str,
    index: &Arc<CorpusIndex>,
    cache: &Cache,
) -> Result<Option<Backend>> {
    match config.backends.get(slot) {
        Some(spec) => {
            let backend = Backend::from_spec(spec, Some(Arc::clone(index)), cache.clone())
                .with_context(|| format!("building {slot} backend"))?;
            Ok(Some(backend))
        }
        None => Ok(None),
    }
}

fn builder_for(config: &RunFileConfig) -> Result<PromptBuilder> {
    Ok(match &config.templates_dir {
        Some(dir) => PromptBuilder::new(
            TemplateSet::with_overrides(dir)
                .with_context(|| format!("loading templates from {}", dir.display()))?,
        ),
        None => PromptBuilder::builtin(),
    })
}

fn shot_pool_for(config: &RunFileConfig) -> Result<ShotPool> {
    Ok(match &config.shot_pool {
        Some(path) => ShotPool::from_file(path)
            .with_context(|| format!("loading shot pool {}", path.display()))?,
        None => ShotPool::builtin(),
    })
}

pub fn stats(corpus: &CorpusArgs, out: &OutArgs) -> Result<()> {
    let examples = load(corpus)?;
    let stats = corpus_stats(&examples);

    let mut table = Table::new(vec!["Group".to_string(), "Count".to_string()]);
    table.push(vec!["Examples".to_string(), stats.total.to_string()]);
    for (bucket, count) in &stats.by_sf_bucket {
        table.push(vec![format!("Facts: {}", bucket.label()), count.to_string()]);
    }
    for (qtype, count) in &stats.by_qtype {
        table.push(vec![format!("Type: {qtype}"), count.to_string()]);
    }
    for (level, count) in &stats.by_level {
        table.push(vec![format!("Level: {level}"), count.to_string()]);
    }
    table.push(vec!["Flagged".to_string(), stats.flagged.to_string()]);
    print!("{}", table.emit());

    ensure_out(&out.out)?;
    write_json(&out.out.join("stats.json"), &stats)
}

pub fn synth(count: usize, seed: u64, out: &Path) -> Result<()> {
    let corpus = synth_corpus(count, seed);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    save_corpus(&corpus, out).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} synthetic examples to {}", corpus.len(), out.display());
    Ok(())
}

pub fn eval(corpus: &CorpusArgs, config: &Path, run: &RunArgs, out: &OutArgs) -> Result<()> {
    let examples = load(corpus)?;
    let index = Arc::new(CorpusIndex::new(examples.clone()));
    let raw = read_config(config)?;
    let pipeline = build_pipeline(&raw, Some(index), cache_for(run))?;
    ensure_out(&out.out)?;
    let records = out.out.join(format!("records-{}.jsonl", pipeline.label));

    let outcome = run_batch(&examples, &pipeline, run.parallelism, Some(&records))?;
    println!(
        "{}: {} examples ({} fresh, {} reused from {})",
        pipeline.label,
        outcome.report.overall.count,
        outcome.executed,
        outcome.reused,
        records.display()
    );
    print!("{}", summary_table(&outcome.report.overall).emit());
    write_json(
        &out.out.join(format!("report-{}.json", pipeline.label)),
        &outcome.report,
    )
}

pub fn ablate(corpus: &CorpusArgs, config: &Path, run: &RunArgs, out: &OutArgs) -> Result<()> {
    let examples = load(corpus)?;
    let index = Arc::new(CorpusIndex::new(examples.clone()));
    let raw = read_config(config)?;
    let cache = cache_for(run);
    let reader = backend_from_slot(&raw, "reader", &index, &cache)?
        .context("ablate needs a `reader` backend in the config")?;
    let embedder = backend_from_slot(&raw, "embedder", &index, &cache)?
        .unwrap_or_else(Backend::mock_embed);
    let profile = raw.profile.to_profile(None)?;
    let params = raw.params.to_params(profile.cot);
    let builder = builder_for(&raw)?;
    let pool = if profile.shots > 0 {
        Some(shot_pool_for(&raw)?)
    } else {
        None
    };

    let outcome = ablate_inputs(
        &examples,
        &reader,
        &embedder,
        &builder,
        pool.as_ref(),
        &profile,
        &params,
        run.parallelism,
    )?;
    print!("{}", outcome.table.emit());

    ensure_out(&out.out)?;
    write_text(&out.out.join("ablation.txt"), &outcome.table.emit())?;
    let summaries: BTreeMap<String, MetricSummary> = outcome
        .per_condition
        .iter()
        .map(|(mode, scores)| {
            let refs: Vec<&ExampleScore> = scores.iter().collect();
            (mode.to_string(), summarize(&refs))
        })
        .collect();
    write_json(&out.out.join("ablation.json"), &summaries)?;
    let lines: Vec<String> = outcome
        .distractors
        .iter()
        .map(|c| serde_json::to_string(c).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    write_text(&out.out.join("distractors.jsonl"), &(lines.join("\n") + "\n"))
}

pub fn sweep(corpus: &CorpusArgs, config: &Path, run: &RunArgs, out: &OutArgs) -> Result<()> {
    let examples = load(corpus)?;
    let index = Arc::new(CorpusIndex::new(examples.clone()));
    let raw = read_config(config)?;
    let cache = cache_for(run);
    let reader = backend_from_slot(&raw, "reader", &index, &cache)?
        .context("sweep needs a `reader` backend in the config")?;
    let builder = builder_for(&raw)?;
    let pool = shot_pool_for(&raw)?;
    let params = raw.params.to_params(false);

    let outcome = fewshot_sweep(&examples, &reader, &builder, &pool, &params, run.parallelism)?;
    print!("{}", outcome.table.emit());

    ensure_out(&out.out)?;
    write_text(&out.out.join("sweep.txt"), &outcome.table.emit())?;
    let mut cells: BTreeMap<String, BTreeMap<String, MetricSummary>> = BTreeMap::new();
    for ((cot, shots), summary) in &outcome.cells {
        let family = if *cot { "cot" } else { "standard" };
        cells
            .entry(family.to_string())
            .or_default()
            .insert(shots.to_string(), summary.clone());
    }
    write_json(&out.out.join("sweep.json"), &cells)
}

pub fn stratify(corpus: &CorpusArgs, records: &Path, by: &str, out: &OutArgs) -> Result<()> {
    let examples = load(corpus)?;
    let index = CorpusIndex::new(examples);
    let text = fs::read_to_string(records)
        .with_context(|| format!("reading records {}", records.display()))?;

    let mut scores: Vec<ExampleScore> = Vec::new();
    let mut unknown = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", records.display(), lineno + 1))?;
        match index.get(&record.example_id) {
            Some(example) => scores.push(example_score(
                example,
                &record.prediction,
                Some(record.scenario.name()),
            )),
            None => {
                log::warn!("record {} not in corpus; skipped", record.example_id);
                unknown += 1;
            }
        }
    }
    if scores.is_empty() {
        bail!("no scorable records in {}", records.display());
    }
    if unknown > 0 {
        println!("skipped {unknown} records without corpus entries");
    }

    let axes: Vec<Stratum> = match by {
        "all" => Stratum::all().to_vec(),
        "sf_bucket" => vec![Stratum::SfBucket],
        "qtype" => vec![Stratum::QType],
        "level" => vec![Stratum::Level],
        "scenario" => vec![Stratum::Scenario],
        other => bail!("unknown axis {other:?}; expected sf_bucket, qtype, level, scenario, or all"),
    };
    ensure_out(&out.out)?;
    for stratum in &axes {
        let table = stratify_scores(&scores, *stratum);
        println!("by {}", stratum.name());
        print!("{}", table.emit());
        println!();
        write_text(
            &out.out.join(format!("stratified-{}.txt", stratum.name())),
            &table.emit(),
        )?;
    }
    let report = mhqa_core::metrics::aggregate(&scores, &axes);
    write_json(&out.out.join("stratified-report.json"), &report)
}

pub fn matrix(corpus: &CorpusArgs, config: &Path, run: &RunArgs, out: &OutArgs) -> Result<()> {
    let examples = load(corpus)?;
    let index = Arc::new(CorpusIndex::new(examples.clone()));
    let matrix = read_matrix_file(config)
        .with_context(|| format!("reading matrix config {}", config.display()))?;
    if matrix.run.is_empty() {
        bail!("matrix config {} has no [[run]] sections", config.display());
    }
    let cache = cache_for(run);
    let configs: Vec<_> = matrix
        .run
        .iter()
        .map(|r| build_pipeline(r, Some(Arc::clone(&index)), cache.clone()))
        .collect::<std::result::Result<_, _>>()?;

    ensure_out(&out.out)?;
    let outcome = scenario_matrix(&examples, &configs, run.parallelism, Some(&out.out))?;
    print!("{}", outcome.table.emit());
    write_text(&out.out.join("matrix.txt"), &outcome.table.emit())?;
    for (scenario, batch) in &outcome.runs {
        write_json(
            &out.out.join(format!("report-{}.json", scenario.short())),
            &batch.report,
        )?;
    }
    Ok(())
}

pub fn score(corpus: &CorpusArgs, predictions: &Path, out: &OutArgs) -> Result<()> {
    let examples = load(corpus)?;
    let preds = load_prediction_file(predictions)
        .with_context(|| format!("reading predictions {}", predictions.display()))?;
    let scored = score_prediction_file(&examples, &preds);
    for warning in &scored.warnings {
        log::warn!("{warning}");
    }
    if !scored.warnings.is_empty() {
        println!("{} prediction warnings (see log)", scored.warnings.len());
    }
    print!("{}", summary_table(&scored.report.overall).emit());
    ensure_out(&out.out)?;
    write_json(&out.out.join("score-report.json"), &scored.report)
}

pub fn distractors(
    corpus: &CorpusArgs,
    config: Option<&Path>,
    k: usize,
    out: &OutArgs,
) -> Result<()> {
    let examples = load(corpus)?;
    let index = Arc::new(CorpusIndex::new(examples.clone()));
    let embedder = match config {
        Some(path) => {
            let raw = read_config(path)?;
            backend_from_slot(&raw, "embedder", &index, &Cache::from_env(false))?
                .context("distractors config must define an `embedder` backend")?
        }
        None => Backend::mock_embed(),
    };

    let mut lines = Vec::with_capacity(examples.len());
    let mut short = 0usize;
    for example in &examples {
        let choice = select_distractors(example, &embedder, k)
            .with_context(|| format!("ranking distractors for {}", example.id))?;
        if !choice.flags.is_empty() {
            short += 1;
        }
        lines.push(serde_json::to_string(&choice)?);
    }
    println!(
        "ranked distractors for {} examples ({short} with fewer than {k} candidates)",
        examples.len()
    );
    ensure_out(&out.out)?;
    write_text(&out.out.join("distractors.jsonl"), &(lines.join("\n") + "\n"))
}

pub struct ExportSftArgs<'a> {
    pub corpus: &'a CorpusArgs,
    pub task: Option<&'a str>,
    pub rationales: Option<&'a Path>,
    pub decompositions: Option<&'a Path>,
    pub templates_dir: Option<&'a Path>,
    pub manifest: Option<&'a str>,
    pub all_manifests: bool,
    pub out: &'a OutArgs,
}

fn read_rationales(path: &Path) -> Result<BTreeMap<String, String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading rationales {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let target: CotTarget = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        map.insert(target.id, target.rationale);
    }
    Ok(map)
}

pub fn export_sft(args: ExportSftArgs) -> Result<()> {
    if args.task.is_none() && args.manifest.is_none() && !args.all_manifests {
        bail!("nothing to do: pass --task, --manifest <slug>, or --all-manifests");
    }
    ensure_out(&args.out.out)?;

    let presets: Vec<ManifestPreset> = if args.all_manifests {
        ManifestPreset::all().to_vec()
    } else if let Some(slug) = args.manifest {
        vec![slug
            .parse()
            .map_err(|e: String| anyhow::anyhow!(e))
            .with_context(|| format!("unknown manifest {slug:?}"))?]
    } else {
        Vec::new()
    };
    if !presets.is_empty() {
        let paths = write_manifests(&presets, &args.out.out)?;
        for path in paths {
            println!("wrote {}", path.display());
        }
    }

    let Some(task_name) = args.task else {
        return Ok(());
    };
    let task: SftTask = task_name
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))
        .with_context(|| format!("unknown task {task_name:?}"))?;
    let examples = load(args.corpus)?;
    let templates = match args.templates_dir {
        Some(dir) => TemplateSet::with_overrides(dir)
            .with_context(|| format!("loading templates from {}", dir.display()))?,
        None => TemplateSet::builtin(),
    };

    let rationales = args.rationales.map(read_rationales).transpose()?;
    let decompositions: Option<BTreeMap<String, Vec<String>>> = args
        .decompositions
        .map(|path| -> Result<_> {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading decompositions {}", path.display()))?;
            Ok(serde_json::from_str(&text)?)
        })
        .transpose()?;
    let sources = SftSources {
        rationales: rationales.as_ref(),
        decompositions: decompositions.as_ref(),
    };

    let export = mhqa_core::sftgen::export_sft(&examples, task, &templates, &sources)?;
    for warning in &export.warnings {
        log::warn!("{warning}");
    }
    println!(
        "{}: {} records ({} examples skipped)",
        task.name(),
        export.records.len(),
        export.skipped
    );
    let path = args.out.out.join(format!("sft-{}.json", task.name()));
    write_alpaca(&export.records, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn gen_cot(
    corpus: &CorpusArgs,
    config: &Path,
    filter: &str,
    run: &RunArgs,
    out: &OutArgs,
) -> Result<()> {
    let examples = load(corpus)?;
    let index = Arc::new(CorpusIndex::new(examples.clone()));
    let raw = read_config(config)?;
    let cache = cache_for(run);
    let teacher = match backend_from_slot(&raw, "teacher", &index, &cache)? {
        Some(backend) => backend,
        None => backend_from_slot(&raw, "reader", &index, &cache)?
            .context("gen-cot needs a `teacher` (or `reader`) backend in the config")?,
    };
    let filter = match filter {
        "hard_only" => CotFilter::HardOnly,
        "all" => CotFilter::All,
        other => bail!("unknown filter {other:?}; expected hard_only or all"),
    };
    let builder = builder_for(&raw)?;
    let params = raw.params.to_params(true);

    ensure_out(&out.out)?;
    let path = out.out.join("cot-targets.jsonl");
    let outcome = gen_cot_targets(
        &examples,
        &teacher,
        &builder,
        &params,
        filter,
        Some(&path),
        run.parallelism,
    )?;
    println!(
        "{} rationales in {} ({} reused, {} generated, {} failed)",
        outcome.targets.len(),
        path.display(),
        outcome.reused,
        outcome.generated,
        outcome.failed
    );
    Ok(())
}
