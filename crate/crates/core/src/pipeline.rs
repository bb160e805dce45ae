//! End-to-end run orchestration.
//!
//! A run walks five stages, each leaving artifacts under the output
//! directory: build the corpus index, rank terms and pick head/tail slices,
//! generate answers, score them, and correlate scores with term frequency.
//! Every stage checks for its artifacts before doing work, so an
//! interrupted run resumes where it stopped and deleting one stage's output
//! recomputes only that stage (and what follows from it).
//!
//! Artifact layout under `output_dir`:
//!
//! ```text
//! index/corpus_index.json
//! headtail/term_freqs.csv,selection.json,selection.csv
//! answers/answers.jsonl,errors.jsonl,run_manifest.json
//! scores/record_scores.jsonl,ngram_scores.jsonl,scores_manifest.json
//! correlations/scatter.csv
//! report.csv,report.json,report.md
//! ```

use crate::corpus;
use crate::dataset::{load_dataset, QARecord};
use crate::harness::{
    load_answers, load_manifest, run_generation, GeneratedAnswer, GenerationOutcome, ANSWERS_FILE,
    ERRORS_FILE, MANIFEST_FILE,
};
use crate::headtail::{
    rank_terms, select_head_tail, write_selection_csv, HeadTailSelection, TermFrequencyRecord,
};
use crate::index::DocFreqIndex;
use crate::metrics::{bertscore, top_k_ngrams, SelectionMetric};
use crate::ngram::NgramRange;
use crate::normalize::{normalize_text, Phrase};
use crate::prompts::PromptTemplates;
use crate::registry::{BackendRegistry, EmbeddingSettings, GenerationSettings};
use crate::report::{
    build_report, scatter_rows, write_report_csv, write_report_json, write_report_md,
    write_scatter_csv, CorrelationReport, NgramScoreRecord, Provenance, RecordScore,
    ScoresManifest,
};
use crate::stats::cooccurrence_probability;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} is not valid TOML: {source}")]
    ParseToml {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("config {path} is not valid JSON: {source}")]
    ParseJson {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("config {path} has unsupported extension; expected .toml or .json")]
    UnsupportedFormat { path: String },
    #[error("config {field}: {detail}")]
    Invalid { field: &'static str, detail: String },
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("step {step} failed: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync + 'static>,
    },
    #[error("generation failed for all {total} records")]
    AllGenerationFailed { total: usize },
}

fn step_err<E>(step: &'static str) -> impl FnOnce(E) -> PipelineError
where
    E: std::error::Error + Send + Sync + 'static,
{
    move |source| PipelineError::Step {
        step,
        source: Box::new(source),
    }
}

fn default_concurrency() -> usize {
    1
}

fn default_top_k() -> usize {
    3
}

fn default_per_quadrant() -> usize {
    25
}

fn default_trace_limit() -> usize {
    20
}

/// Settings for one full run. Relative paths in a config file are resolved
/// against the file's directory. The environment variables
/// `TERMTRACE_EMBEDDING_ENDPOINT` and `TERMTRACE_GENERATION_ENDPOINT`
/// override the remote endpoints after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// JSONL corpus of `{"doc_id", "text"}` records.
    pub corpus_path: PathBuf,
    /// QA dataset, `.jsonl` or `.csv`.
    pub dataset_path: PathBuf,
    /// Root directory for all artifacts; created if missing.
    pub output_dir: PathBuf,
    /// Generation worker threads.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// N-gram sizes ranked against the term.
    #[serde(default)]
    pub ngrams: NgramRange,
    /// How many top n-grams to keep per answer.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Head and tail size per subcorpus.
    #[serde(default = "default_per_quadrant")]
    pub per_quadrant: usize,
    /// Default document listing size for term traces.
    #[serde(default = "default_trace_limit")]
    pub trace_limit: usize,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
    #[serde(default)]
    pub embedding: EmbeddingSettings,
    #[serde(default)]
    pub generation: GenerationSettings,
    #[serde(default)]
    pub prompts: PromptTemplates,
}

pub const EMBEDDING_ENDPOINT_ENV: &str = "TERMTRACE_EMBEDDING_ENDPOINT";
pub const GENERATION_ENDPOINT_ENV: &str = "TERMTRACE_GENERATION_ENDPOINT";

impl RunConfig {
    /// Parse a config file (TOML or JSON by extension), resolve its
    /// relative paths, and apply environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let content = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: display.clone(),
            source,
        })?;
        let mut config: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&content).map_err(|source| ConfigError::ParseToml {
                path: display.clone(),
                source: Box::new(source),
            })?,
            Some("json") => {
                serde_json::from_str(&content).map_err(|source| ConfigError::ParseJson {
                    path: display.clone(),
                    source,
                })?
            }
            _ => return Err(ConfigError::UnsupportedFormat { path: display }),
        };
        if let Some(dir) = path.parent() {
            config.resolve_relative(dir);
        }
        config.apply_env_overrides();
        Ok(config)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.corpus_path);
        resolve(&mut self.dataset_path);
        resolve(&mut self.output_dir);
        if let Some(script) = &mut self.generation.script_path {
            resolve(script);
        }
    }

    fn apply_env_overrides(&mut self) {
        if let Ok(endpoint) = std::env::var(EMBEDDING_ENDPOINT_ENV) {
            log::info!("embedding endpoint overridden from environment: {endpoint}");
            self.embedding.remote.endpoint = endpoint;
        }
        if let Ok(endpoint) = std::env::var(GENERATION_ENDPOINT_ENV) {
            log::info!("generation endpoint overridden from environment: {endpoint}");
            self.generation.remote.endpoint = endpoint;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let must_exist = |field: &'static str, path: &Path| -> Result<(), ConfigError> {
            if path.as_os_str().is_empty() || !path.exists() {
                return Err(ConfigError::Invalid {
                    field,
                    detail: format!("{} does not exist", path.display()),
                });
            }
            Ok(())
        };
        must_exist("corpus_path", &self.corpus_path)?;
        must_exist("dataset_path", &self.dataset_path)?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(ConfigError::Invalid {
                field: "output_dir",
                detail: "must not be empty".to_owned(),
            });
        }
        if self.ngrams.max() > 8 {
            return Err(ConfigError::Invalid {
                field: "ngrams",
                detail: format!("max size {} exceeds the supported 8", self.ngrams.max()),
            });
        }
        for (field, value) in [
            ("top_k", self.top_k),
            ("per_quadrant", self.per_quadrant),
            ("concurrency", self.concurrency),
            ("trace_limit", self.trace_limit),
        ] {
            if value == 0 {
                return Err(ConfigError::Invalid {
                    field,
                    detail: "must be at least 1".to_owned(),
                });
            }
        }
        self.prompts.validate().map_err(|e| ConfigError::Invalid {
            field: "prompts",
            detail: e.to_string(),
        })
    }

    /// Hash of the effective configuration, for provenance records.
    pub fn hash(&self) -> String {
        let body = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(body.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Locations of every artifact a run produces.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index_dir(&self) -> PathBuf {
        self.root.join("index")
    }

    pub fn index_file(&self) -> PathBuf {
        self.index_dir().join("corpus_index.json")
    }

    pub fn headtail_dir(&self) -> PathBuf {
        self.root.join("headtail")
    }

    pub fn term_freqs_file(&self) -> PathBuf {
        self.headtail_dir().join("term_freqs.csv")
    }

    pub fn selection_json(&self) -> PathBuf {
        self.headtail_dir().join("selection.json")
    }

    pub fn selection_csv(&self) -> PathBuf {
        self.headtail_dir().join("selection.csv")
    }

    pub fn answers_dir(&self) -> PathBuf {
        self.root.join("answers")
    }

    pub fn answers_file(&self) -> PathBuf {
        self.answers_dir().join(ANSWERS_FILE)
    }

    pub fn errors_file(&self) -> PathBuf {
        self.answers_dir().join(ERRORS_FILE)
    }

    pub fn manifest_file(&self) -> PathBuf {
        self.answers_dir().join(MANIFEST_FILE)
    }

    pub fn scores_dir(&self) -> PathBuf {
        self.root.join("scores")
    }

    pub fn record_scores_file(&self) -> PathBuf {
        self.scores_dir().join("record_scores.jsonl")
    }

    pub fn ngram_scores_file(&self) -> PathBuf {
        self.scores_dir().join("ngram_scores.jsonl")
    }

    pub fn scores_manifest_file(&self) -> PathBuf {
        self.scores_dir().join("scores_manifest.json")
    }

    pub fn correlations_dir(&self) -> PathBuf {
        self.root.join("correlations")
    }

    pub fn scatter_file(&self) -> PathBuf {
        self.correlations_dir().join("scatter.csv")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_md(&self) -> PathBuf {
        self.root.join("report.md")
    }
}

/// Result of a full run.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub generation: GenerationOutcome,
    pub report: CorrelationReport,
}

impl PipelineOutcome {
    /// True when some records failed but the run still produced a report.
    pub fn is_partial(&self) -> bool {
        self.generation.failed > 0
    }
}

pub struct Pipeline {
    config: RunConfig,
    config_hash: String,
    registry: BackendRegistry,
}

impl Pipeline {
    /// Validate the config, create the output directory, and fix the
    /// config hash used in every artifact this run writes.
    pub fn new(config: RunConfig, registry: BackendRegistry) -> Result<Self, PipelineError> {
        config.validate()?;
        fs::create_dir_all(&config.output_dir).map_err(step_err("setup"))?;
        let config_hash = config.hash();
        Ok(Self {
            config,
            config_hash,
            registry,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn registry(&self) -> &BackendRegistry {
        &self.registry
    }

    pub fn paths(&self) -> ArtifactPaths {
        ArtifactPaths::new(self.config.output_dir.clone())
    }

    pub fn load_dataset(&self) -> Result<Vec<QARecord>, PipelineError> {
        load_dataset(&self.config.dataset_path).map_err(step_err("dataset"))
    }

    /// Stage 1: the corpus index, loaded from disk when already built.
    pub fn ensure_index(&self) -> Result<DocFreqIndex, PipelineError> {
        let paths = self.paths();
        let file = paths.index_file();
        if file.exists() {
            log::info!("index: reusing {}", file.display());
            return DocFreqIndex::load(&file).map_err(step_err("index"));
        }
        log::info!("index: building from {}", self.config.corpus_path.display());
        let records = corpus::read_jsonl(&self.config.corpus_path).map_err(step_err("index"))?;
        let index = DocFreqIndex::build(records).map_err(step_err("index"))?;
        fs::create_dir_all(paths.index_dir()).map_err(step_err("index"))?;
        index.save(&file).map_err(step_err("index"))?;
        Ok(index)
    }

    /// Stage 2: term frequency ranking and head/tail selection. The ranking
    /// is cheap, so it is recomputed in memory every run; files are only
    /// rewritten when their content would change.
    pub fn ensure_term_stats(
        &self,
        index: &DocFreqIndex,
        records: &[QARecord],
    ) -> Result<(Vec<TermFrequencyRecord>, HeadTailSelection), PipelineError> {
        let ranked = rank_terms(records, index).map_err(step_err("headtail"))?;
        let selection = select_head_tail(&ranked, self.config.per_quadrant);
        let paths = self.paths();
        fs::create_dir_all(paths.headtail_dir()).map_err(step_err("headtail"))?;

        let freqs_csv = {
            let mut out = String::from("term,subcorpus,doc_freq\n");
            for t in &ranked {
                out.push_str(&format!(
                    "{},{},{}\n",
                    t.term,
                    t.subcorpus.code(),
                    t.doc_freq
                ));
            }
            out
        };
        write_if_changed(&paths.term_freqs_file(), freqs_csv.as_bytes())
            .map_err(step_err("headtail"))?;

        let selection_bytes =
            serde_json::to_string_pretty(&selection).expect("selection serializes") + "\n";
        let json_changed = write_if_changed(&paths.selection_json(), selection_bytes.as_bytes())
            .map_err(step_err("headtail"))?;
        if json_changed || !paths.selection_csv().exists() {
            write_selection_csv(&selection, &paths.selection_csv())
                .map_err(step_err("headtail"))?;
        }
        Ok((ranked, selection))
    }

    /// Stage 3: generated answers. The harness itself resumes record by
    /// record; this wrapper additionally avoids constructing the backend
    /// (which for remote backends means a connection) when every answer is
    /// already on disk.
    pub fn ensure_answers(&self, records: &[QARecord]) -> Result<GenerationOutcome, PipelineError> {
        let paths = self.paths();
        let answers_file = paths.answers_file();
        if answers_file.exists() && paths.manifest_file().exists() {
            let done = load_answers(&answers_file).map_err(step_err("generate"))?;
            let done_ids: std::collections::BTreeSet<&str> =
                done.iter().map(|a| a.record_id.as_str()).collect();
            if records
                .iter()
                .all(|r| done_ids.contains(r.record_id.as_str()))
            {
                log::info!("generate: all {} answers already present", records.len());
                fs::write(paths.errors_file(), "").map_err(step_err("generate"))?;
                return Ok(GenerationOutcome {
                    generated: 0,
                    resumed: records.len(),
                    failed: 0,
                });
            }
        }

        let backend = self
            .registry
            .build_generation(&self.config.generation)
            .map_err(step_err("generate"))?;
        let outcome = run_generation(
            records,
            backend.as_ref(),
            &self.config.prompts,
            self.config.generation.params,
            &self.config_hash,
            &paths.answers_dir(),
            self.config.concurrency,
        )
        .map_err(step_err("generate"))?;
        if outcome.all_failed() {
            return Err(PipelineError::AllGenerationFailed {
                total: outcome.failed,
            });
        }
        Ok(outcome)
    }

    /// Stage 4: score answers against gold references and rank answer
    /// n-grams against the term. Returns the scores, the manifest, and
    /// whether existing artifacts were reused.
    pub fn ensure_scores(
        &self,
        index: &DocFreqIndex,
        records: &[QARecord],
    ) -> Result<(Vec<RecordScore>, ScoresManifest, bool), PipelineError> {
        let paths = self.paths();
        let answers = load_answers(&paths.answers_file()).map_err(step_err("score"))?;

        if let Some(existing) = self.reusable_scores(&answers)? {
            log::info!("score: reusing {}", paths.record_scores_file().display());
            return Ok((existing.0, existing.1, true));
        }

        let backend = self
            .registry
            .build_embedding(&self.config.embedding)
            .map_err(step_err("score"))?;
        let answer_map: BTreeMap<&str, &GeneratedAnswer> =
            answers.iter().map(|a| (a.record_id.as_str(), a)).collect();

        let mut scores = Vec::new();
        let mut ngram_records = Vec::new();
        for record in records {
            let Some(answer) = answer_map.get(record.record_id.as_str()) else {
                continue;
            };
            let phrase = Phrase::parse(&record.term).map_err(step_err("score"))?;
            let term = phrase.surface();
            let term_doc_freq = index.doc_freq(&phrase) as u64;

            let gold_empty = normalize_text(&record.gold_answer).is_empty();
            let answer_empty = normalize_text(&answer.text).is_empty();
            let (precision, recall, f1, flag) = if gold_empty {
                (None, None, None, Some("empty_gold".to_owned()))
            } else if answer_empty {
                // An empty answer is a fully wrong answer, not missing data.
                (
                    Some(0.0),
                    Some(0.0),
                    Some(0.0),
                    Some("empty_answer".to_owned()),
                )
            } else {
                let score = bertscore(backend.as_ref(), &answer.text, &record.gold_answer)
                    .map_err(step_err("score"))?;
                (
                    Some(score.precision),
                    Some(score.recall),
                    Some(score.f1),
                    None,
                )
            };
            scores.push(RecordScore {
                record_id: record.record_id.clone(),
                term: term.clone(),
                query_type: record.query_type,
                subcorpus: record.subcorpus,
                precision,
                recall,
                f1,
                term_doc_freq,
                flag,
            });

            let mut ngrams = top_k_ngrams(
                backend.as_ref(),
                &record.term,
                &answer.text,
                self.config.ngrams,
                self.config.top_k,
                self.config.selection_metric,
            )
            .map_err(step_err("score"))?;
            for scored in &mut ngrams {
                scored.co_prob = if term_doc_freq == 0 {
                    None
                } else {
                    let ngram_phrase = Phrase::parse(&scored.ngram).map_err(step_err("score"))?;
                    let co = index.co_doc_freq(&phrase, &ngram_phrase);
                    Some(
                        cooccurrence_probability(co, term_doc_freq as usize)
                            .map_err(step_err("score"))?,
                    )
                };
            }
            ngram_records.push(NgramScoreRecord {
                record_id: record.record_id.clone(),
                term,
                query_type: record.query_type,
                ngrams,
            });
        }

        let manifest = ScoresManifest {
            embedding_backend: backend.descriptor(),
            embedding_settings: self.config.embedding.clone(),
            selection_metric: self.config.selection_metric,
            ngrams: self.config.ngrams,
            top_k: self.config.top_k,
            scored_answers: answers.len(),
        };

        fs::create_dir_all(paths.scores_dir()).map_err(step_err("score"))?;
        write_jsonl(&paths.record_scores_file(), &scores).map_err(step_err("score"))?;
        write_jsonl(&paths.ngram_scores_file(), &ngram_records).map_err(step_err("score"))?;
        let manifest_bytes =
            serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(paths.scores_manifest_file(), manifest_bytes).map_err(step_err("score"))?;
        Ok((scores, manifest, false))
    }

    /// Load prior scores when they exist and still describe this config
    /// and this answer set.
    fn reusable_scores(
        &self,
        answers: &[GeneratedAnswer],
    ) -> Result<Option<(Vec<RecordScore>, ScoresManifest)>, PipelineError> {
        let paths = self.paths();
        let (rs, ns, ms) = (
            paths.record_scores_file(),
            paths.ngram_scores_file(),
            paths.scores_manifest_file(),
        );
        if !(rs.exists() && ns.exists() && ms.exists()) {
            return Ok(None);
        }
        let manifest_text = fs::read_to_string(&ms).map_err(step_err("score"))?;
        let manifest: ScoresManifest = match serde_json::from_str(&manifest_text) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("score: manifest unreadable ({e}), recomputing");
                return Ok(None);
            }
        };
        let current_settings = &self.config.embedding;
        if manifest.embedding_settings != *current_settings
            || manifest.selection_metric != self.config.selection_metric
            || manifest.ngrams != self.config.ngrams
            || manifest.top_k != self.config.top_k
            || manifest.scored_answers != answers.len()
        {
            log::info!("score: artifacts are stale, recomputing");
            return Ok(None);
        }
        let scores = read_jsonl_records::<RecordScore>(&rs).map_err(step_err("score"))?;
        Ok(Some((scores, manifest)))
    }

    /// Stage 5: correlations and the report. `force` rewrites even when the
    /// artifacts exist, which callers set after recomputing scores.
    pub fn ensure_report(
        &self,
        force: bool,
        index: &DocFreqIndex,
        records: &[QARecord],
        scores: &[RecordScore],
        scores_manifest: &ScoresManifest,
        selection: &HeadTailSelection,
    ) -> Result<CorrelationReport, PipelineError> {
        let paths = self.paths();
        if !force
            && paths.report_json().exists()
            && paths.report_csv().exists()
            && paths.report_md().exists()
            && paths.scatter_file().exists()
        {
            let text = fs::read_to_string(paths.report_json()).map_err(step_err("report"))?;
            match serde_json::from_str::<CorrelationReport>(&text) {
                Ok(report) if report.provenance.config_hash == self.config_hash => {
                    log::info!("report: reusing {}", paths.report_json().display());
                    return Ok(report);
                }
                Ok(_) => log::info!("report: config changed, recomputing"),
                Err(e) => log::warn!("report: existing report unreadable ({e}), recomputing"),
            }
        }

        let run_manifest = load_manifest(&paths.manifest_file()).map_err(step_err("report"))?;
        let provenance = Provenance {
            created_unix: run_manifest.created_unix,
            config_hash: self.config_hash.clone(),
            corpus_docs: index.doc_count(),
            dataset_records: records.len(),
            normalization: index.metadata().normalization.clone(),
            embedding_backend: scores_manifest.embedding_backend.clone(),
            generation_backend: run_manifest.generation_backend.name.clone(),
            selection_metric: scores_manifest.selection_metric,
            ngrams: scores_manifest.ngrams,
            top_k: scores_manifest.top_k,
        };
        let report = build_report(provenance, scores, selection);

        fs::create_dir_all(paths.correlations_dir()).map_err(step_err("report"))?;
        write_scatter_csv(&scatter_rows(scores), &paths.scatter_file())
            .map_err(step_err("report"))?;
        write_report_json(&report, &paths.report_json()).map_err(step_err("report"))?;
        write_report_csv(&report, &paths.report_csv()).map_err(step_err("report"))?;
        write_report_md(&report, &paths.report_md()).map_err(step_err("report"))?;
        Ok(report)
    }

    /// All five stages in order.
    pub fn run(&self) -> Result<PipelineOutcome, PipelineError> {
        let records = self.load_dataset()?;
        let index = self.ensure_index()?;
        let (_ranked, selection) = self.ensure_term_stats(&index, &records)?;
        let generation = self.ensure_answers(&records)?;
        let (scores, scores_manifest, scores_reused) = self.ensure_scores(&index, &records)?;
        let report = self.ensure_report(
            !scores_reused,
            &index,
            &records,
            &scores,
            &scores_manifest,
            &selection,
        )?;
        Ok(PipelineOutcome { generation, report })
    }
}

/// Write `bytes` only when the file is missing or its content differs.
/// Returns whether a write happened.
fn write_if_changed(path: &Path, bytes: &[u8]) -> std::io::Result<bool> {
    if let Ok(existing) = fs::read(path) {
        if existing == bytes {
            return Ok(false);
        }
    }
    fs::write(path, bytes)?;
    Ok(true)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("artifacts serialize"));
        out.push('\n');
    }
    fs::write(path, out)
}

fn read_jsonl_records<T: serde::de::DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let content = fs::read_to_string(path)?;
    let mut items = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(line).map_err(|e| {
            std::io::Error::other(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::CorrelationCell;

    fn write_corpus(dir: &Path) -> PathBuf {
        let path = dir.join("corpus.jsonl");
        let mut lines = String::new();
        // "anemia" in 4 docs, "asthma" in 2, "gout" in 1, "melena" in 0.
        for (doc_id, text) in [
            ("d1", "anemia and asthma basics"),
            ("d2", "anemia overview"),
            ("d3", "anemia deep dive"),
            ("d4", "anemia and gout"),
            ("d5", "asthma guide"),
            ("d6", "unrelated text"),
        ] {
            lines.push_str(&format!(
                "{}\n",
                serde_json::json!({"doc_id": doc_id, "text": text})
            ));
        }
        fs::write(&path, lines).unwrap();
        path
    }

    fn write_dataset(dir: &Path) -> PathBuf {
        let path = dir.join("dataset.jsonl");
        let mut lines = String::new();
        let rows = [
            ("r1", "anemia", "DEF", "EX"),
            ("r2", "asthma", "DEF", "GP"),
            ("r3", "gout", "DEF", "EX"),
            ("r4", "anemia", "EX", "GP"),
            ("r5", "melena", "PARA", "EX"),
        ];
        for (id, term, qt, sub) in rows {
            lines.push_str(&format!(
                "{}\n",
                serde_json::json!({
                    "record_id": id,
                    "term": term,
                    "query_type": qt,
                    "question": format!("about {term}"),
                    "gold_answer": format!("{term} is a condition"),
                    "subcorpus": sub,
                    "source": "clear",
                })
            ));
        }
        fs::write(&path, lines).unwrap();
        path
    }

    fn config_in(dir: &Path) -> RunConfig {
        RunConfig {
            corpus_path: write_corpus(dir),
            dataset_path: write_dataset(dir),
            output_dir: dir.join("out"),
            concurrency: 1,
            ngrams: NgramRange::new(1, 2).unwrap(),
            top_k: 2,
            per_quadrant: 1,
            trace_limit: 5,
            selection_metric: SelectionMetric::Cosine,
            embedding: EmbeddingSettings {
                dim: 8,
                ..EmbeddingSettings::default()
            },
            generation: GenerationSettings::default(),
            prompts: PromptTemplates::default(),
        }
    }

    #[test]
    fn toml_config_round_trip_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("corpus.jsonl"), "").unwrap();
        fs::write(dir.path().join("dataset.jsonl"), "").unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "corpus_path = \"corpus.jsonl\"\n\
             dataset_path = \"dataset.jsonl\"\n\
             output_dir = \"out\"\n\
             top_k = 5\n\
             [embedding]\n\
             backend = \"hash\"\n\
             seed = 42\n",
        )
        .unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.top_k, 5);
        assert_eq!(config.per_quadrant, 25);
        assert_eq!(config.embedding.seed, 42);
        assert_eq!((config.ngrams.min(), config.ngrams.max()), (2, 5));
        // Relative paths resolve against the config file's directory.
        assert_eq!(config.corpus_path, dir.path().join("corpus.jsonl"));
        assert!(config.validate().is_ok());
    }

    #[test]
    fn validation_names_the_bad_field() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = config_in(dir.path());
        config.corpus_path = dir.path().join("missing.jsonl");
        match config.validate().unwrap_err() {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "corpus_path"),
            other => panic!("unexpected: {other}"),
        }

        let mut config = config_in(dir.path());
        config.top_k = 0;
        assert!(matches!(
            config.validate().unwrap_err(),
            ConfigError::Invalid { field: "top_k", .. }
        ));

        let mut config = config_in(dir.path());
        config.ngrams = NgramRange::new(2, 9).unwrap();
        assert!(matches!(
            config.validate().unwrap_err(),
            ConfigError::Invalid {
                field: "ngrams",
                ..
            }
        ));
    }

    #[test]
    fn config_hash_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        let config = config_in(dir.path());
        let mut other = config.clone();
        assert_eq!(config.hash(), other.hash());
        other.top_k = 9;
        assert_ne!(config.hash(), other.hash());
        assert_eq!(config.hash().len(), 64);
    }

    #[test]
    fn full_run_produces_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let pipeline =
            Pipeline::new(config_in(dir.path()), BackendRegistry::with_defaults()).unwrap();
        let outcome = pipeline.run().unwrap();
        assert!(!outcome.is_partial());
        assert_eq!(outcome.generation.generated, 5);
        assert_eq!(outcome.report.score_vs_freq.len(), 5);

        let paths = pipeline.paths();
        for file in [
            paths.index_file(),
            paths.term_freqs_file(),
            paths.selection_json(),
            paths.selection_csv(),
            paths.answers_file(),
            paths.errors_file(),
            paths.manifest_file(),
            paths.record_scores_file(),
            paths.ngram_scores_file(),
            paths.scores_manifest_file(),
            paths.scatter_file(),
            paths.report_csv(),
            paths.report_json(),
            paths.report_md(),
        ] {
            assert!(file.exists(), "missing artifact {}", file.display());
        }
        // Four records have attested terms ("melena" has zero frequency).
        assert_eq!(outcome.report.correlated_records, 4);
    }

    #[test]
    fn rerun_reuses_artifacts_and_report_bytes_are_stable() {
        let dir = tempfile::tempdir().unwrap();
        let pipeline =
            Pipeline::new(config_in(dir.path()), BackendRegistry::with_defaults()).unwrap();
        pipeline.run().unwrap();
        let paths = pipeline.paths();
        let report_before = fs::read(paths.report_json()).unwrap();
        let answers_before = fs::read(paths.answers_file()).unwrap();

        let outcome = pipeline.run().unwrap();
        assert_eq!(outcome.generation.generated, 0);
        assert_eq!(outcome.generation.resumed, 5);
        assert_eq!(report_before, fs::read(paths.report_json()).unwrap());
        assert_eq!(answers_before, fs::read(paths.answers_file()).unwrap());
    }

    #[test]
    fn deleting_the_report_recomputes_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let pipeline =
            Pipeline::new(config_in(dir.path()), BackendRegistry::with_defaults()).unwrap();
        pipeline.run().unwrap();
        let paths = pipeline.paths();
        let before = fs::read(paths.report_json()).unwrap();
        fs::remove_file(paths.report_json()).unwrap();
        fs::remove_file(paths.report_csv()).unwrap();
        fs::remove_file(paths.report_md()).unwrap();
        fs::remove_file(paths.scatter_file()).unwrap();
        pipeline.run().unwrap();
        assert_eq!(before, fs::read(paths.report_json()).unwrap());
    }

    #[test]
    fn changed_config_invalidates_scores() {
        let dir = tempfile::tempdir().unwrap();
        let config = config_in(dir.path());
        let pipeline = Pipeline::new(config.clone(), BackendRegistry::with_defaults()).unwrap();
        pipeline.run().unwrap();

        let mut changed = config;
        changed.embedding.seed = 99;
        let pipeline2 = Pipeline::new(changed, BackendRegistry::with_defaults()).unwrap();
        let records = pipeline2.load_dataset().unwrap();
        let index = pipeline2.ensure_index().unwrap();
        let (_, _, reused) = pipeline2.ensure_scores(&index, &records).unwrap();
        assert!(!reused, "different seed must not reuse scores");
    }

    #[test]
    fn empty_answers_are_scored_zero_and_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = config_in(dir.path());
        let script = dir.path().join("script.jsonl");
        let mut lines = String::new();
        for (id, text) in [
            ("r1", "anemia is low hemoglobin"),
            ("r2", "asthma narrows airways"),
            ("r3", "..."),
            ("r4", "iron deficiency anemia"),
            ("r5", "dark stool"),
        ] {
            lines.push_str(&format!(
                "{}\n",
                serde_json::json!({"record_id": id, "text": text})
            ));
        }
        fs::write(&script, lines).unwrap();
        config.generation.backend = "script".to_owned();
        config.generation.script_path = Some(script);

        let pipeline = Pipeline::new(config, BackendRegistry::with_defaults()).unwrap();
        let outcome = pipeline.run().unwrap();
        assert!(!outcome.is_partial());
        let scores =
            read_jsonl_records::<RecordScore>(&pipeline.paths().record_scores_file()).unwrap();
        let r3 = scores.iter().find(|s| s.record_id == "r3").unwrap();
        assert_eq!(r3.f1, Some(0.0));
        assert_eq!(r3.flag.as_deref(), Some("empty_answer"));
        // The zero score still enters correlations (gout is attested).
        assert!(r3.usable_for_correlation());
    }

    #[test]
    fn partial_generation_still_reports() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = config_in(dir.path());
        let script = dir.path().join("script.jsonl");
        let mut lines = String::new();
        for (id, text) in [
            ("r1", "anemia is low hemoglobin"),
            ("r2", "asthma narrows airways"),
            ("r4", "iron deficiency anemia"),
            ("r5", "dark stool"),
        ] {
            lines.push_str(&format!(
                "{}\n",
                serde_json::json!({"record_id": id, "text": text})
            ));
        }
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"record_id": "r3", "fail": "service down"})
        ));
        fs::write(&script, lines).unwrap();
        config.generation.backend = "script".to_owned();
        config.generation.script_path = Some(script);

        let pipeline = Pipeline::new(config, BackendRegistry::with_defaults()).unwrap();
        let outcome = pipeline.run().unwrap();
        assert!(outcome.is_partial());
        assert_eq!(outcome.generation.failed, 1);
        // r3 is absent from the scores rather than poisoning them.
        let scores =
            read_jsonl_records::<RecordScore>(&pipeline.paths().record_scores_file()).unwrap();
        assert!(scores.iter().all(|s| s.record_id != "r3"));
        assert!(pipeline.paths().report_json().exists());
    }

    #[test]
    fn report_rows_follow_expected_order() {
        let dir = tempfile::tempdir().unwrap();
        let pipeline =
            Pipeline::new(config_in(dir.path()), BackendRegistry::with_defaults()).unwrap();
        let outcome = pipeline.run().unwrap();
        let codes: Vec<&str> = outcome
            .report
            .score_vs_freq
            .iter()
            .map(|r| r.query_type.code())
            .collect();
        assert_eq!(codes, ["DEF", "EX", "DEN", "PARA", "EXP"]);
        // Three DEF records: only two of them have nonzero frequency terms
        // after "gout"... all three are attested here, so expect a cell
        // with n = 3 for the combined column.
        match &outcome.report.score_vs_freq[0].cells.combined {
            CorrelationCell::Ok(c) => assert_eq!(c.n, 3),
            CorrelationCell::Degenerate { n, .. } => assert_eq!(*n, 3),
            CorrelationCell::InsufficientData { n } => assert_eq!(*n, 3),
        }
    }
}
