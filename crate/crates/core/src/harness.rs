//! Batch answer generation with crash-safe resume.
//!
//! Answers append to `answers.jsonl` as they arrive, one flushed line per
//! record, so a killed run loses at most the record in flight. The next run
//! reads the file back and generates only what is missing. `errors.jsonl`
//! is rewritten from scratch on every run (stale failures would otherwise
//! mask a recovery), and `run_manifest.json` is written once when the run
//! first starts, so its timestamp survives resumes.

use crate::dataset::QARecord;
use crate::generation::{
    GenerationBackend, GenerationDescriptor, GenerationParams, GenerationRequest,
};
use crate::prompts::PromptTemplates;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{mpsc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const ERRORS_FILE: &str = "errors.jsonl";
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("failed to {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad answer at {path} line {line}: {source}")]
    BadAnswer {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} contains record {record_id:?} twice")]
    DuplicateAnswer { path: String, record_id: String },
    #[error("manifest {path} is not valid: {source}")]
    BadManifest {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// One generated answer as persisted to `answers.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub record_id: String,
    pub model_name: String,
    pub prompt: String,
    pub text: String,
    pub latency_ms: u64,
}

/// One failed record as persisted to `errors.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub record_id: String,
    pub error: String,
    pub retryable: bool,
}

/// Provenance for a generation run, written once at run start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub created_unix: u64,
    pub config_hash: String,
    pub generation_backend: GenerationDescriptor,
    pub params: GenerationParams,
    pub dataset_records: usize,
}

/// Tally of one `run_generation` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationOutcome {
    /// Records answered by this run.
    pub generated: usize,
    /// Records skipped because a previous run already answered them.
    pub resumed: usize,
    /// Records that failed; details are in `errors.jsonl`.
    pub failed: usize,
}

impl GenerationOutcome {
    pub fn total(&self) -> usize {
        self.generated + self.resumed + self.failed
    }

    /// True when some records failed but others succeeded or were resumed.
    pub fn is_partial(&self) -> bool {
        self.failed > 0 && self.failed < self.total()
    }

    pub fn all_failed(&self) -> bool {
        self.failed > 0 && self.failed == self.total()
    }
}

/// Generate answers for every record not already present in
/// `out_dir/answers.jsonl`. Records are answered in dataset order;
/// `concurrency` worker threads share the queue, one writer owns the files.
pub fn run_generation(
    records: &[QARecord],
    backend: &dyn GenerationBackend,
    templates: &PromptTemplates,
    params: GenerationParams,
    config_hash: &str,
    out_dir: &Path,
    concurrency: usize,
) -> Result<GenerationOutcome, HarnessError> {
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        action: "create",
        path: out_dir.display().to_string(),
        source,
    })?;

    ensure_manifest(records, backend, params, config_hash, out_dir)?;

    let answers_path = out_dir.join(ANSWERS_FILE);
    let done: BTreeSet<String> = if answers_path.exists() {
        load_answers(&answers_path)?
            .into_iter()
            .map(|a| a.record_id)
            .collect()
    } else {
        BTreeSet::new()
    };

    let pending: Vec<&QARecord> = records
        .iter()
        .filter(|r| !done.contains(&r.record_id))
        .collect();
    let resumed = records.len() - pending.len();
    if resumed > 0 {
        log::info!(
            "resuming: {resumed} of {} answers already present",
            records.len()
        );
    }

    let mut answers_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&answers_path)
        .map_err(|source| HarnessError::Io {
            action: "open",
            path: answers_path.display().to_string(),
            source,
        })?;
    let errors_path = out_dir.join(ERRORS_FILE);
    let mut errors_file = fs::File::create(&errors_path).map_err(|source| HarnessError::Io {
        action: "create",
        path: errors_path.display().to_string(),
        source,
    })?;

    let model_name = backend.descriptor().name;
    let queue = Mutex::new(pending.into_iter());
    let (tx, rx) = mpsc::channel::<(&QARecord, String, Result<String, String>, u64)>();

    let (generated, failed) = std::thread::scope(|scope| {
        let queue = &queue;
        for _ in 0..concurrency.max(1) {
            let tx = tx.clone();
            scope.spawn(move || loop {
                let record = queue.lock().expect("queue lock").next();
                let Some(record) = record else { break };
                let prompt = templates.build_query(record.query_type, &record.term);
                let request = GenerationRequest {
                    record_id: record.record_id.clone(),
                    term: record.term.clone(),
                    prompt: prompt.clone(),
                    params,
                };
                let start = Instant::now();
                let result = backend.generate(&request).map_err(|e| e.to_string());
                let latency = start.elapsed().as_millis() as u64;
                if tx.send((record, prompt, result, latency)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut generated = 0usize;
        let mut failed = 0usize;
        for (record, prompt, result, latency_ms) in rx {
            match result {
                Ok(text) => {
                    if text.trim().is_empty() {
                        log::warn!("record {} produced an empty answer", record.record_id);
                    }
                    let answer = GeneratedAnswer {
                        record_id: record.record_id.clone(),
                        model_name: model_name.clone(),
                        prompt,
                        text,
                        latency_ms,
                    };
                    if let Err(source) = append_json_line(&mut answers_file, &answer) {
                        return Err(HarnessError::Io {
                            action: "append to",
                            path: answers_path.display().to_string(),
                            source,
                        });
                    }
                    generated += 1;
                }
                Err(error) => {
                    log::warn!("record {} failed: {error}", record.record_id);
                    let failure = GenerationFailure {
                        record_id: record.record_id.clone(),
                        // Transport failures are worth retrying on the next
                        // run; the message is all that survives the channel,
                        // so classify from it.
                        retryable: error.contains("retryable: true"),
                        error,
                    };
                    if let Err(source) = append_json_line(&mut errors_file, &failure) {
                        return Err(HarnessError::Io {
                            action: "append to",
                            path: errors_path.display().to_string(),
                            source,
                        });
                    }
                    failed += 1;
                }
            }
        }
        Ok((generated, failed))
    })?;

    Ok(GenerationOutcome {
        generated,
        resumed,
        failed,
    })
}

fn append_json_line<T: Serialize>(file: &mut fs::File, value: &T) -> std::io::Result<()> {
    let line = serde_json::to_string(value).expect("answers serialize");
    file.write_all(line.as_bytes())?;
    file.write_all(b"\n")?;
    file.flush()
}

fn ensure_manifest(
    records: &[QARecord],
    backend: &dyn GenerationBackend,
    params: GenerationParams,
    config_hash: &str,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    let path = out_dir.join(MANIFEST_FILE);
    if path.exists() {
        // Validate but keep it; the original timestamp is the run's one.
        load_manifest(&path)?;
        return Ok(());
    }
    let manifest = RunManifest {
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .expect("clock after 1970")
            .as_secs(),
        config_hash: config_hash.to_owned(),
        generation_backend: backend.descriptor(),
        params,
        dataset_records: records.len(),
    };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body + "\n").map_err(|source| HarnessError::Io {
        action: "write",
        path: path.display().to_string(),
        source,
    })
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, HarnessError> {
    let display = path.display().to_string();
    let content = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        action: "read",
        path: display.clone(),
        source,
    })?;
    serde_json::from_str(&content).map_err(|source| HarnessError::BadManifest {
        path: display,
        source,
    })
}

/// Read answers back, sorted by record id. Duplicates are an error: they
/// mean two runs wrote concurrently and the file cannot be trusted.
pub fn load_answers(path: &Path) -> Result<Vec<GeneratedAnswer>, HarnessError> {
    let display = path.display().to_string();
    let content = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        action: "read",
        path: display.clone(),
        source,
    })?;
    let mut answers = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let answer: GeneratedAnswer =
            serde_json::from_str(line).map_err(|source| HarnessError::BadAnswer {
                path: display.clone(),
                line: idx + 1,
                source,
            })?;
        answers.push(answer);
    }
    answers.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    for pair in answers.windows(2) {
        if pair[0].record_id == pair[1].record_id {
            return Err(HarnessError::DuplicateAnswer {
                path: display,
                record_id: pair[0].record_id.clone(),
            });
        }
    }
    Ok(answers)
}

pub fn load_failures(path: &Path) -> Result<Vec<GenerationFailure>, HarnessError> {
    let display = path.display().to_string();
    let content = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        action: "read",
        path: display.clone(),
        source,
    })?;
    let mut failures = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let failure: GenerationFailure =
            serde_json::from_str(line).map_err(|source| HarnessError::BadAnswer {
                path: display.clone(),
                line: idx + 1,
                source,
            })?;
        failures.push(failure);
    }
    Ok(failures)
}
