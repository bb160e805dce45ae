//! End-to-end runs of the compiled binary against the bundled fixtures,
//! checking outputs, artifacts, and exit codes (0 ok, 2 partial, 1 fatal).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("..")
        .join("..")
        .join("fixtures")
        .canonicalize()
        .expect("fixtures directory exists")
}

/// Copy the fixture inputs into `dir` and write a config pointing at them.
fn stage_workspace(dir: &Path) -> PathBuf {
    let fixtures = fixtures_dir();
    for name in [
        "mini_corpus.jsonl",
        "mini_dataset.jsonl",
        "mini_answers.jsonl",
    ] {
        fs::copy(fixtures.join(name), dir.join(name)).expect("copy fixture");
    }
    let config_path = dir.join("run_config.toml");
    fs::write(
        &config_path,
        concat!(
            "corpus_path = \"mini_corpus.jsonl\"\n",
            "dataset_path = \"mini_dataset.jsonl\"\n",
            "output_dir = \"out\"\n",
            "concurrency = 1\n",
            "top_k = 3\n",
            "per_quadrant = 2\n",
            "[embedding]\n",
            "seed = 7\n",
            "[generation]\n",
            "backend = \"script\"\n",
            "script_path = \"mini_answers.jsonl\"\n",
        ),
    )
    .expect("write config");
    config_path
}

fn termtrace(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_termtrace"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn run_builds_every_artifact_and_exits_zero() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = stage_workspace(dir.path());

    let output = termtrace(&config, &["run"]);
    assert!(
        output.status.success(),
        "run failed: {}",
        stderr_of(&output)
    );
    let stdout = stdout_of(&output);
    assert!(
        stdout.contains("generated 25, resumed 0, failed 0"),
        "unexpected run output: {stdout}"
    );

    let out = dir.path().join("out");
    for artifact in [
        "index/corpus_index.json",
        "headtail/term_freqs.csv",
        "headtail/selection.json",
        "headtail/selection.csv",
        "answers/answers.jsonl",
        "answers/errors.jsonl",
        "answers/run_manifest.json",
        "scores/record_scores.jsonl",
        "scores/ngram_scores.jsonl",
        "scores/scores_manifest.json",
        "correlations/scatter.csv",
        "report.csv",
        "report.json",
        "report.md",
    ] {
        assert!(out.join(artifact).is_file(), "missing artifact {artifact}");
    }

    // A rerun resumes instead of regenerating.
    let rerun = termtrace(&config, &["run"]);
    assert!(
        rerun.status.success(),
        "rerun failed: {}",
        stderr_of(&rerun)
    );
    assert!(
        stdout_of(&rerun).contains("generated 0, resumed 25, failed 0"),
        "unexpected rerun output: {}",
        stdout_of(&rerun)
    );
}

#[test]
fn index_query_reports_frequencies_and_documents() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = stage_workspace(dir.path());

    let build = termtrace(&config, &["index", "build"]);
    assert!(build.status.success(), "{}", stderr_of(&build));
    assert!(stdout_of(&build).contains("20 documents"));

    let query = termtrace(
        &config,
        &[
            "index",
            "query",
            "diabetes",
            "--co",
            "hypertension",
            "--list",
            "3",
        ],
    );
    assert!(query.status.success(), "{}", stderr_of(&query));
    let stdout = stdout_of(&query);
    assert!(
        stdout.contains("doc_freq(\"diabetes\") = 16"),
        "unexpected query output: {stdout}"
    );
    assert!(
        stdout.contains("co_doc_freq(\"diabetes\", \"hypertension\") = 12"),
        "unexpected co output: {stdout}"
    );
    let listed = stdout
        .lines()
        .filter(|l| {
            l.strip_prefix('d')
                .is_some_and(|rest| rest.chars().all(|c| c.is_ascii_digit()))
        })
        .count();
    assert_eq!(
        listed, 3,
        "expected exactly three listed documents: {stdout}"
    );

    // Normalization applies to queries: case and punctuation are ignored.
    let shouty = termtrace(&config, &["index", "query", "  DIABETES! "]);
    assert!(stdout_of(&shouty).contains("doc_freq(\"diabetes\") = 16"));
}

#[test]
fn headtail_select_writes_the_selection() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = stage_workspace(dir.path());

    let select = termtrace(&config, &["headtail", "select"]);
    assert!(select.status.success(), "{}", stderr_of(&select));
    assert!(dir.path().join("out/headtail/selection.json").is_file());
    assert!(dir.path().join("out/headtail/selection.csv").is_file());

    let trace = termtrace(&config, &["headtail", "trace", "diabetes", "--limit", "2"]);
    assert!(trace.status.success(), "{}", stderr_of(&trace));
    let stdout = stdout_of(&trace);
    assert!(
        stdout.contains("16"),
        "trace should report the frequency: {stdout}"
    );
}

#[test]
fn partial_generation_exits_with_code_two() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = stage_workspace(dir.path());

    // Drop the last five scripted answers so those records fail.
    let answers = dir.path().join("mini_answers.jsonl");
    let full = fs::read_to_string(&answers).expect("read answers");
    let kept: Vec<&str> = full.lines().take(20).collect();
    fs::write(&answers, kept.join("\n")).expect("truncate answers");

    let qa = termtrace(&config, &["qa", "run"]);
    assert_eq!(qa.status.code(), Some(2), "stdout: {}", stdout_of(&qa));
    let stdout = stdout_of(&qa);
    assert!(
        stdout.contains("failed 5"),
        "expected five failures: {stdout}"
    );
    assert!(stdout.contains("failures listed in"));

    let errors = fs::read_to_string(dir.path().join("out/answers/errors.jsonl"))
        .expect("errors artifact exists");
    assert_eq!(errors.lines().count(), 5);

    // The whole pipeline still runs on the successful records, reporting
    // partial completion through the same exit code.
    let run = termtrace(&config, &["run"]);
    assert_eq!(run.status.code(), Some(2), "stdout: {}", stdout_of(&run));
    assert!(dir.path().join("out/report.md").is_file());
}

#[test]
fn correlate_without_answers_explains_the_missing_stage() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = stage_workspace(dir.path());

    let output = termtrace(&config, &["correlate"]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = stderr_of(&output);
    assert!(
        stderr.contains("run `termtrace qa run` first"),
        "unexpected stderr: {stderr}"
    );
}

#[test]
fn missing_config_is_a_fatal_error() {
    let dir = tempfile::tempdir().expect("tempdir");
    let output = termtrace(&dir.path().join("nope.toml"), &["run"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).starts_with("error:"));
}

#[test]
fn cli_overrides_beat_the_config_file() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = stage_workspace(dir.path());

    let elsewhere = dir.path().join("elsewhere");
    let output = termtrace(
        &config,
        &[
            "--output-dir",
            elsewhere.to_str().expect("utf8 path"),
            "index",
            "build",
        ],
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
    assert!(elsewhere.join("index/corpus_index.json").is_file());
    assert!(!dir.path().join("out/index/corpus_index.json").exists());
}

#[test]
fn report_prints_the_rendered_tables() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = stage_workspace(dir.path());

    let run = termtrace(&config, &["run"]);
    assert!(run.status.success(), "{}", stderr_of(&run));
    let report = termtrace(&config, &["report"]);
    assert!(report.status.success(), "{}", stderr_of(&report));
    let stdout = stdout_of(&report);
    for label in ["DEF", "EX", "DEN", "PARA", "EXP", "head", "tail", "overall"] {
        assert!(
            stdout.contains(label),
            "report output missing {label}: {stdout}"
        );
    }
}
