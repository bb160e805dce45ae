//! Command line front end for the termtrace pipeline.
//!
//! Every subcommand reads the same run config and executes one slice of the
//! pipeline, reusing on-disk artifacts where they exist. Exit codes: 0 on
//! success, 2 when a run completed with some failed records, 1 on fatal
//! errors.

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use termtrace_core::dataset::QARecord;
use termtrace_core::headtail::trace_term;
use termtrace_core::index::DocFreqIndex;
use termtrace_core::metrics::SelectionMetric;
use termtrace_core::normalize::Phrase;
use termtrace_core::pipeline::{Pipeline, RunConfig};
use termtrace_core::registry::BackendRegistry;
use termtrace_core::report::RecordScore;

#[derive(Parser)]
#[command(
    name = "termtrace",
    version,
    about = "Trace how corpus term frequency relates to generated answer quality"
)]
struct Cli {
    /// Run configuration file (.toml or .json).
    #[arg(long, global = true, default_value = "run_config.toml")]
    config: PathBuf,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override fields of the loaded config.
#[derive(Args)]
struct Overrides {
    /// Corpus JSONL path.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// QA dataset path (.jsonl or .csv).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Artifact output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Seed for deterministic embedding backends.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Embedding backend name (e.g. hash, remote).
    #[arg(long, global = true)]
    embedding_backend: Option<String>,
    /// Generation backend name (e.g. echo, script, remote).
    #[arg(long, global = true)]
    generation_backend: Option<String>,
    /// Generation worker threads.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Top n-grams kept per answer.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Head and tail size per subcorpus.
    #[arg(long, global = true)]
    per_quadrant: Option<usize>,
    /// N-gram ranking metric (cosine or bert_score).
    #[arg(long, global = true)]
    metric: Option<SelectionMetric>,
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(corpus) = &self.corpus {
            config.corpus_path = corpus.clone();
        }
        if let Some(dataset) = &self.dataset {
            config.dataset_path = dataset.clone();
        }
        if let Some(output_dir) = &self.output_dir {
            config.output_dir = output_dir.clone();
        }
        if let Some(seed) = self.seed {
            config.embedding.seed = seed;
        }
        if let Some(backend) = &self.embedding_backend {
            config.embedding.backend = backend.clone();
        }
        if let Some(backend) = &self.generation_backend {
            config.generation.backend = backend.clone();
        }
        if let Some(concurrency) = self.concurrency {
            config.concurrency = concurrency;
        }
        if let Some(top_k) = self.top_k {
            config.top_k = top_k;
        }
        if let Some(per_quadrant) = self.per_quadrant {
            config.per_quadrant = per_quadrant;
        }
        if let Some(metric) = self.metric {
            config.selection_metric = metric;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Corpus index operations.
    #[command(subcommand)]
    Index(IndexCommand),
    /// QA generation.
    #[command(subcommand)]
    Qa(QaCommand),
    /// Score generated answers against gold references.
    Score,
    /// Correlate answer scores with corpus term frequency.
    Correlate,
    /// Head and tail term selection.
    #[command(subcommand)]
    Headtail(HeadtailCommand),
    /// Print the correlation report.
    Report,
    /// Run the whole pipeline end to end.
    Run,
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Build the corpus index (no-op when already built).
    Build,
    /// Query the index for a phrase.
    Query {
        /// Phrase to look up.
        phrase: String,
        /// Also report how many documents contain both phrases.
        #[arg(long)]
        co: Option<String>,
        /// List up to this many containing documents.
        #[arg(long)]
        list: Option<usize>,
    },
}

#[derive(Subcommand)]
enum QaCommand {
    /// Generate answers for every dataset record, resuming past work.
    Run,
}

#[derive(Subcommand)]
enum HeadtailCommand {
    /// Select the most and least attested terms.
    Select,
    /// List the documents containing one term.
    Trace {
        term: String,
        /// Maximum documents to list.
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = RunConfig::load(&cli.config)?;
    cli.overrides.apply(&mut config);
    let pipeline = Pipeline::new(config, BackendRegistry::with_defaults())?;

    match cli.command {
        Command::Index(IndexCommand::Build) => {
            let index = pipeline.ensure_index()?;
            println!(
                "index: {} documents, {} tokens ({})",
                index.doc_count(),
                index.metadata().token_count,
                pipeline.paths().index_file().display()
            );
        }
        Command::Index(IndexCommand::Query { phrase, co, list }) => {
            let index = pipeline.ensure_index()?;
            let parsed = Phrase::parse(&phrase)?;
            println!(
                "doc_freq({:?}) = {}",
                parsed.surface(),
                index.doc_freq(&parsed)
            );
            if let Some(other) = co {
                let other = Phrase::parse(&other)?;
                println!(
                    "co_doc_freq({:?}, {:?}) = {}",
                    parsed.surface(),
                    other.surface(),
                    index.co_doc_freq(&parsed, &other)
                );
            }
            if let Some(limit) = list {
                for doc_id in index.containing_docs(&parsed, limit) {
                    println!("{doc_id}");
                }
            }
        }
        Command::Qa(QaCommand::Run) => {
            let records = pipeline.load_dataset()?;
            let outcome = pipeline.ensure_answers(&records)?;
            println!(
                "generated {}, resumed {}, failed {} ({})",
                outcome.generated,
                outcome.resumed,
                outcome.failed,
                pipeline.paths().answers_file().display()
            );
            if outcome.failed > 0 {
                println!(
                    "failures listed in {}",
                    pipeline.paths().errors_file().display()
                );
                return Ok(ExitCode::from(2));
            }
        }
        Command::Score => {
            let (records, index) = stage_inputs(&pipeline)?;
            let (scores, _, reused) = pipeline.ensure_scores(&index, &records)?;
            let scored: Vec<&RecordScore> = scores.iter().filter(|s| s.f1.is_some()).collect();
            let mean = if scored.is_empty() {
                0.0
            } else {
                scored.iter().map(|s| s.f1.unwrap()).sum::<f64>() / scored.len() as f64
            };
            println!(
                "scored {} records{}, mean f1 {:.4} ({})",
                scored.len(),
                if reused { " (reused)" } else { "" },
                mean,
                pipeline.paths().record_scores_file().display()
            );
        }
        Command::Correlate => {
            let report = correlate(&pipeline)?;
            println!(
                "correlated {} records ({})",
                report.correlated_records,
                pipeline.paths().report_json().display()
            );
        }
        Command::Headtail(HeadtailCommand::Select) => {
            let (records, index) = stage_inputs(&pipeline)?;
            let (ranked, selection) = pipeline.ensure_term_stats(&index, &records)?;
            println!(
                "ranked {} terms: {} head, {} tail, {} unattested ({})",
                ranked.len(),
                selection.head.len(),
                selection.tail.len(),
                selection.excluded_zero.len(),
                pipeline.paths().selection_json().display()
            );
            for (label, terms) in [("head", &selection.head), ("tail", &selection.tail)] {
                for t in terms {
                    println!(
                        "{label}\t{}\t{}\t{}",
                        t.term,
                        t.subcorpus.code(),
                        t.doc_freq
                    );
                }
            }
        }
        Command::Headtail(HeadtailCommand::Trace { term, limit }) => {
            let index = pipeline.ensure_index()?;
            let limit = limit.unwrap_or(pipeline.config().trace_limit);
            let trace = trace_term(&index, &term, limit)?;
            println!(
                "term {:?}: doc_freq {}, {} occurrences across the {} listed documents",
                trace.term,
                trace.doc_freq,
                trace.listed_occurrences,
                trace.docs.len()
            );
            for doc in &trace.docs {
                println!("{}\t{}", doc.doc_id, doc.count);
            }
        }
        Command::Report => {
            correlate(&pipeline)?;
            let path = pipeline.paths().report_md();
            let md = std::fs::read_to_string(&path)
                .map_err(|e| anyhow::anyhow!("failed to read {}: {e}", path.display()))?;
            print!("{md}");
        }
        Command::Run => {
            let outcome = pipeline.run()?;
            println!(
                "generated {}, resumed {}, failed {}; correlated {} records",
                outcome.generation.generated,
                outcome.generation.resumed,
                outcome.generation.failed,
                outcome.report.correlated_records
            );
            println!("report: {}", pipeline.paths().report_md().display());
            if outcome.is_partial() {
                println!(
                    "partial run; failures listed in {}",
                    pipeline.paths().errors_file().display()
                );
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn stage_inputs(pipeline: &Pipeline) -> Result<(Vec<QARecord>, DocFreqIndex)> {
    let records = pipeline.load_dataset()?;
    let index = pipeline.ensure_index()?;
    Ok((records, index))
}

/// Scores and the report, assuming answers already exist on disk.
fn correlate(pipeline: &Pipeline) -> Result<termtrace_core::report::CorrelationReport> {
    if !pipeline.paths().answers_file().exists() {
        bail!(
            "no answers at {}; run `termtrace qa run` first",
            pipeline.paths().answers_file().display()
        );
    }
    let (records, index) = stage_inputs(pipeline)?;
    let (_, selection) = pipeline.ensure_term_stats(&index, &records)?;
    let (scores, manifest, reused) = pipeline.ensure_scores(&index, &records)?;
    let report =
        pipeline.ensure_report(!reused, &index, &records, &scores, &manifest, &selection)?;
    Ok(report)
}
