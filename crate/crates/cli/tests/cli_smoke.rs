//! End-to-end smoke tests: drive the compiled binary over a synthetic
//! corpus it generates itself, and check artifacts and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn mhqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhqa"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let output = mhqa(dir, args);
    assert!(
        output.status.success(),
        "mhqa {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const ORACLE_S3: &str = r#"
scenario = "S3"
label = "smoke"

[backends.selector]
kind = "oracle_selector"

[backends.sentence_selector]
kind = "oracle_selector"

[backends.reader]
kind = "oracle_reader"
"#;

const ORACLE_READER: &str = r#"
scenario = "S2"

[profile]
shots = 1

[backends.reader]
kind = "oracle_reader"
"#;

fn synth_corpus_file(dir: &Path, count: usize) {
    run_ok(
        dir,
        &[
            "synth",
            "--count",
            &count.to_string(),
            "--seed",
            "5",
            "--out",
            "corpus.json",
        ],
    );
}

#[test]
fn synth_stats_eval_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_corpus_file(dir, 16);
    write(dir, "run.toml", ORACLE_S3);

    let stats = run_ok(dir, &["stats", "--corpus", "corpus.json", "--out", "statsdir"]);
    assert!(stats.contains("Examples"), "stats output:\n{stats}");
    assert!(stats.contains("16"), "stats output:\n{stats}");
    assert!(dir.join("statsdir/stats.json").is_file());

    let eval_args = [
        "eval",
        "--corpus",
        "corpus.json",
        "--config",
        "run.toml",
        "--out",
        "evaldir",
        "--parallelism",
        "3",
    ];
    let first = run_ok(dir, &eval_args);
    assert!(first.contains("16 fresh, 0 reused"), "first eval:\n{first}");
    assert!(first.contains("Joint F1"), "first eval:\n{first}");
    assert!(first.contains("100.00"), "first eval:\n{first}");

    let records = std::fs::read_to_string(dir.join("evaldir/records-smoke.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 16);
    let report_path = dir.join("evaldir/report-smoke.json");
    let report_first = std::fs::read_to_string(&report_path).unwrap();

    let second = run_ok(dir, &eval_args);
    assert!(second.contains("0 fresh, 16 reused"), "second eval:\n{second}");
    assert_eq!(std::fs::read_to_string(&report_path).unwrap(), report_first);
}

#[test]
fn stratify_reads_eval_records() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_corpus_file(dir, 16);
    write(dir, "run.toml", ORACLE_S3);
    run_ok(
        dir,
        &[
            "eval", "--corpus", "corpus.json", "--config", "run.toml", "--out", "evaldir",
        ],
    );

    let output = run_ok(
        dir,
        &[
            "stratify",
            "--corpus",
            "corpus.json",
            "--records",
            "evaldir/records-smoke.jsonl",
            "--by",
            "sf_bucket",
            "--out",
            "stratdir",
        ],
    );
    assert!(output.contains("by sf_bucket"), "stratify output:\n{output}");
    assert!(output.contains("two"), "stratify output:\n{output}");
    assert!(output.contains("four_plus"), "stratify output:\n{output}");
    assert!(dir.join("stratdir/stratified-sf_bucket.txt").is_file());
    assert!(dir.join("stratdir/stratified-report.json").is_file());
}

#[test]
fn score_command_accepts_gold_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_corpus_file(dir, 12);

    let corpus: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("corpus.json")).unwrap()).unwrap();
    let mut answer = serde_json::Map::new();
    let mut sp = serde_json::Map::new();
    for record in corpus.as_array().unwrap() {
        let id = record["_id"].as_str().unwrap().to_string();
        answer.insert(id.clone(), record["answer"].clone());
        sp.insert(id, record["supporting_facts"].clone());
    }
    let preds = serde_json::json!({ "answer": answer, "sp": sp });
    write(dir, "preds.json", &serde_json::to_string(&preds).unwrap());

    let output = run_ok(
        dir,
        &[
            "score",
            "--corpus",
            "corpus.json",
            "--predictions",
            "preds.json",
            "--out",
            "scoredir",
        ],
    );
    assert!(output.contains("Joint EM"), "score output:\n{output}");
    assert!(output.contains("100.00"), "score output:\n{output}");
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("scoredir/score-report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["overall"]["count"], 12);
}

#[test]
fn matrix_compares_scenarios_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_corpus_file(dir, 10);
    write(
        dir,
        "matrix.toml",
        r#"
[[run]]
scenario = "S2"

[run.backends.selector]
kind = "oracle_selector"

[run.backends.reader]
kind = "oracle_reader"

[[run]]
scenario = "S4"

[run.backends.selector]
kind = "oracle_selector"

[run.backends.sentence_selector]
kind = "oracle_selector"

[run.backends.reader]
kind = "oracle_reader"
"#,
    );

    let output = run_ok(
        dir,
        &[
            "matrix",
            "--corpus",
            "corpus.json",
            "--config",
            "matrix.toml",
            "--out",
            "matdir",
        ],
    );
    assert!(output.contains("S2"), "matrix output:\n{output}");
    assert!(output.contains("S4"), "matrix output:\n{output}");
    assert!(output.contains("Gold Only"), "matrix output:\n{output}");
    assert!(dir.join("matdir/matrix.txt").is_file());
    assert!(dir.join("matdir/report-S2.json").is_file());
    assert!(dir.join("matdir/report-S4.json").is_file());
    assert!(dir.join("matdir/records-S2.jsonl").is_file());
}

#[test]
fn ablate_sweep_and_distractors_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_corpus_file(dir, 8);
    write(dir, "reader.toml", ORACLE_READER);

    let ablate = run_ok(
        dir,
        &[
            "ablate",
            "--corpus",
            "corpus.json",
            "--config",
            "reader.toml",
            "--out",
            "abldir",
        ],
    );
    assert!(
        ablate.contains("Gold + 2 Distractors"),
        "ablate output:\n{ablate}"
    );
    assert!(dir.join("abldir/ablation.txt").is_file());
    assert!(dir.join("abldir/ablation.json").is_file());

    let sweep = run_ok(
        dir,
        &[
            "sweep",
            "--corpus",
            "corpus.json",
            "--config",
            "reader.toml",
            "--limit",
            "5",
            "--out",
            "swdir",
        ],
    );
    assert!(sweep.contains("Zero-shot"), "sweep output:\n{sweep}");
    assert!(sweep.contains("8-shot"), "sweep output:\n{sweep}");
    let cells: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("swdir/sweep.json")).unwrap())
            .unwrap();
    assert!(cells["standard"]["0"]["count"].is_number());
    assert!(cells["cot"]["8"]["count"].is_number());

    let distractors = run_ok(
        dir,
        &[
            "distractors",
            "--corpus",
            "corpus.json",
            "--k",
            "2",
            "--out",
            "distdir",
        ],
    );
    assert!(distractors.contains("8 examples"), "distractors output:\n{distractors}");
    let lines = std::fs::read_to_string(dir.join("distdir/distractors.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 8);
}

#[test]
fn gen_cot_feeds_export_sft() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_corpus_file(dir, 12);
    write(
        dir,
        "teacher.toml",
        r#"
scenario = "S2"

[backends.teacher]
kind = "scripted_mock"

[[backends.teacher.rules]]
match = "regex"
pattern = ".*"
reply = "Both pages describe the same detail."
"#,
    );

    let cot = run_ok(
        dir,
        &[
            "gen-cot",
            "--corpus",
            "corpus.json",
            "--config",
            "teacher.toml",
            "--filter",
            "hard_only",
            "--out",
            "cotdir",
        ],
    );
    assert!(cot.contains("4 generated"), "gen-cot output:\n{cot}");

    let export = run_ok(
        dir,
        &[
            "export-sft",
            "--corpus",
            "corpus.json",
            "--task",
            "reader",
            "--rationales",
            "cotdir/cot-targets.jsonl",
            "--out",
            "sftdir",
        ],
    );
    assert!(export.contains("4 records"), "export output:\n{export}");
    let records: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("sftdir/sft-reader.json")).unwrap())
            .unwrap();
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 4);
    for record in records {
        let output = record["output"].as_str().unwrap();
        assert!(output.contains("Both pages describe the same detail."));
        assert!(output.contains("Answer:"));
    }

    let manifests = run_ok(
        dir,
        &[
            "export-sft",
            "--corpus",
            "corpus.json",
            "--all-manifests",
            "--out",
            "mdir",
        ],
    );
    assert!(manifests.contains("bactrainus-8b.toml"), "{manifests}");
    let toml_count = std::fs::read_dir(dir.join("mdir"))
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().and_then(|x| x.to_str()) == Some("toml")
        })
        .count();
    assert_eq!(toml_count, 8);
    let text = std::fs::read_to_string(dir.join("mdir/bactrainus-8b.toml")).unwrap();
    assert!(text.starts_with("name = "), "manifest text:\n{text}");
}

#[test]
fn config_and_usage_errors_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_corpus_file(dir, 4);

    write(dir, "bad.toml", "scenario = \"S9\"\n");
    let output = mhqa(
        dir,
        &[
            "eval",
            "--corpus",
            "corpus.json",
            "--config",
            "bad.toml",
            "--out",
            "x",
        ],
    );
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("S9") || stderr.contains("scenario"), "stderr:\n{stderr}");

    let output = mhqa(dir, &["eval", "--config", "missing.toml"]);
    assert!(!output.status.success());

    let output = mhqa(
        dir,
        &["stats", "--corpus", "no-such-file.json", "--out", "x"],
    );
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no-such-file.json"), "stderr:\n{stderr}");
}
