//! Environment overrides are process-global state, so this file holds the
//! single test touching them; running it alone in its own binary keeps it
//! away from parallel tests.

use std::fs;

use termtrace_core::pipeline::{RunConfig, EMBEDDING_ENDPOINT_ENV, GENERATION_ENDPOINT_ENV};

#[test]
fn endpoint_env_vars_override_the_config_file() {
    let dir = tempfile::tempdir().expect("tempdir");
    fs::write(dir.path().join("corpus.jsonl"), "").expect("touch corpus");
    fs::write(dir.path().join("dataset.jsonl"), "").expect("touch dataset");
    let config_path = dir.path().join("run_config.toml");
    fs::write(
        &config_path,
        concat!(
            "corpus_path = \"corpus.jsonl\"\n",
            "dataset_path = \"dataset.jsonl\"\n",
            "output_dir = \"out\"\n",
            "[embedding.remote]\n",
            "endpoint = \"10.0.0.1:9090\"\n",
            "[generation.remote]\n",
            "endpoint = \"10.0.0.1:9091\"\n",
        ),
    )
    .expect("write config");

    let from_file = RunConfig::load(&config_path).expect("config loads");
    assert_eq!(from_file.embedding.remote.endpoint, "10.0.0.1:9090");
    assert_eq!(from_file.generation.remote.endpoint, "10.0.0.1:9091");
    assert_eq!(from_file.corpus_path, dir.path().join("corpus.jsonl"));

    std::env::set_var(EMBEDDING_ENDPOINT_ENV, "10.9.9.9:7070");
    std::env::set_var(GENERATION_ENDPOINT_ENV, "10.9.9.9:7071");
    let overridden = RunConfig::load(&config_path).expect("config loads");
    std::env::remove_var(EMBEDDING_ENDPOINT_ENV);
    std::env::remove_var(GENERATION_ENDPOINT_ENV);

    assert_eq!(overridden.embedding.remote.endpoint, "10.9.9.9:7070");
    assert_eq!(overridden.generation.remote.endpoint, "10.9.9.9:7071");

    let clean_again = RunConfig::load(&config_path).expect("config loads");
    assert_eq!(clean_again.embedding.remote.endpoint, "10.0.0.1:9090");
}
