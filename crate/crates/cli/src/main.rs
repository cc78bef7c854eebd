//! `mhqa`: run and evaluate selector-reader pipelines over HotpotQA-style
//! corpora, from corpus stats through SFT export. Every command works
//! offline against scripted, oracle, or mock backends; remote backends are
//! configured through the same run files.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "mhqa", version, about, max_term_width = 100)]
struct Cli {
    /// Log more (-v debug, -vv trace)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that reads a corpus.
#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus JSON file (HotpotQA array format)
    #[arg(long)]
    corpus: PathBuf,

    /// Split label: train or dev
    #[arg(long, default_value = "dev")]
    split: String,

    /// Drop flagged records instead of keeping them
    #[arg(long)]
    strict: bool,

    /// Evaluate a fixed-seed random sample of this many examples
    #[arg(long)]
    limit: Option<usize>,

    /// Sampling seed
    #[arg(long, default_value_t = 17)]
    seed: u64,
}

/// Flags shared by every command that calls backends.
#[derive(Debug, Args)]
struct RunArgs {
    /// Worker threads
    #[arg(long, default_value_t = 4)]
    parallelism: usize,

    /// Disable the response cache
    #[arg(long)]
    no_cache: bool,

    /// Persistent cache directory (otherwise MHQA_CACHE_DIR, else memory)
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Directory for reports and other outputs
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corpus composition: counts by fact bucket, question type, level
    Stats {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        out: OutArgs,
    },

    /// Write a synthetic corpus for offline runs and smoke tests
    Synth {
        /// How many examples to generate
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Generation seed
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output corpus JSON path
        #[arg(long)]
        out: PathBuf,
    },

    /// Run one scenario from a run config and report metrics
    Eval {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Run config TOML
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
    },

    /// Reader input ablation: five evidence conditions over one sample
    Ablate {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Run config TOML; `reader` backend required, `embedder` optional
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
    },

    /// Few-shot sweep: shots 0/1/2/4/8, with and without reasoning
    Sweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Run config TOML; `reader` backend required
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
    },

    /// Stratified report over an existing records file
    Stratify {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Records JSONL written by eval or matrix
        #[arg(long)]
        records: PathBuf,
        /// Axis: sf_bucket, qtype, level, scenario, or all
        #[arg(long, default_value = "all")]
        by: String,
        #[command(flatten)]
        out: OutArgs,
    },

    /// Run several scenarios from a matrix config and compare them
    Matrix {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Matrix config TOML ([[run]] sections)
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
    },

    /// Score an external predictions file without running any backend
    Score {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Predictions JSON: {"answer": {id: text}, "sp": {id: [[title, index]]}}
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },

    /// Rank distractor paragraphs by embedding similarity
    Distractors {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Optional run config providing an `embedder` backend
        #[arg(long)]
        config: Option<PathBuf>,
        /// Distractors per example
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[command(flatten)]
        out: OutArgs,
    },

    /// Export instruction-tuning data and training manifests
    #[command(name = "export-sft")]
    ExportSft {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Task: reader, single_stage_selector, paragraph_selector,
        /// sentence_selector, decomposer
        #[arg(long)]
        task: Option<String>,
        /// Rationales JSONL from gen-cot (reader task outputs become CoT)
        #[arg(long)]
        rationales: Option<PathBuf>,
        /// Decompositions JSON: {id: ["sub one?", "sub two?"]}
        #[arg(long)]
        decompositions: Option<PathBuf>,
        /// Prompt template override directory
        #[arg(long)]
        templates_dir: Option<PathBuf>,
        /// Write one training manifest by slug (e.g. bactrainus-8b)
        #[arg(long)]
        manifest: Option<String>,
        /// Write every training manifest
        #[arg(long)]
        all_manifests: bool,
        #[command(flatten)]
        out: OutArgs,
    },

    /// Generate chain-of-thought rationales with a teacher backend
    #[command(name = "gen-cot")]
    GenCot {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Run config TOML; the `teacher` (or `reader`) backend is the teacher
        #[arg(long)]
        config: PathBuf,
        /// Which examples: hard_only or all
        #[arg(long, default_value = "hard_only")]
        filter: String,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match cli.command {
        Command::Stats { corpus, out } => commands::stats(&corpus, &out),
        Command::Synth { count, seed, out } => commands::synth(count, seed, &out),
        Command::Eval {
            corpus,
            config,
            run,
            out,
        } => commands::eval(&corpus, &config, &run, &out),
        Command::Ablate {
            corpus,
            config,
            run,
            out,
        } => commands::ablate(&corpus, &config, &run, &out),
        Command::Sweep {
            corpus,
            config,
            run,
            out,
        } => commands::sweep(&corpus, &config, &run, &out),
        Command::Stratify {
            corpus,
            records,
            by,
            out,
        } => commands::stratify(&corpus, &records, &by, &out),
        Command::Matrix {
            corpus,
            config,
            run,
            out,
        } => commands::matrix(&corpus, &config, &run, &out),
        Command::Score {
            corpus,
            predictions,
            out,
        } => commands::score(&corpus, &predictions, &out),
        Command::Distractors {
            corpus,
            config,
            k,
            out,
        } => commands::distractors(&corpus, config.as_deref(), k, &out),
        Command::ExportSft {
            corpus,
            task,
            rationales,
            decompositions,
            templates_dir,
            manifest,
            all_manifests,
            out,
        } => commands::export_sft(commands::ExportSftArgs {
            corpus: &corpus,
            task: task.as_deref(),
            rationales: rationales.as_deref(),
            decompositions: decompositions.as_deref(),
            templates_dir: templates_dir.as_deref(),
            manifest: manifest.as_deref(),
            all_manifests,
            out: &out,
        }),
        Command::GenCot {
            corpus,
            config,
            filter,
            run,
            out,
        } => commands::gen_cot(&corpus, &config, &filter, &run, &out),
    }
}
