//! Correlation report: data model, assembly, and emitters.
//!
//! The report always has the same shape: one score-vs-frequency row per
//! query type and three frequency-slice rows (head, tail, overall), each
//! with cells for the expert subcorpus, the general-public subcorpus, and
//! both combined. A cell that cannot be computed (too few points, constant
//! series) is carried as an explicit NA with its reason instead of being
//! dropped, so tables from different runs always line up.

use crate::dataset::{QueryType, Subcorpus};
use crate::embedding::BackendDescriptor;
use crate::headtail::HeadTailSelection;
use crate::metrics::{ScoredNgram, SelectionMetric};
use crate::ngram::NgramRange;
use crate::stats::{correlate_labeled, log_freq, CorrelationResult, StatsError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// A generated answer scored against its gold reference.
///
/// `f1` is `None` when the record could not be scored at all (unusable gold
/// reference); an empty generated answer scores 0 and is flagged, because a
/// silent answer is a wrong answer, not a missing data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub record_id: String,
    /// Normalized term surface.
    pub term: String,
    pub query_type: QueryType,
    pub subcorpus: Subcorpus,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Documents containing the term in the reference corpus.
    pub term_doc_freq: u64,
    /// Set when something about the record needed special handling.
    pub flag: Option<String>,
}

impl RecordScore {
    /// A record enters correlations when it has a score and its term has
    /// nonzero frequency (zero cannot sit on a log axis).
    pub fn usable_for_correlation(&self) -> bool {
        self.f1.is_some() && self.term_doc_freq > 0
    }
}

/// Top-ranked answer n-grams for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramScoreRecord {
    pub record_id: String,
    pub term: String,
    pub query_type: QueryType,
    pub ngrams: Vec<ScoredNgram>,
}

/// Identity of the scoring pass, written next to its artifacts so later
/// stages can report it without rebuilding the backend, and so reruns can
/// tell whether existing scores still match the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresManifest {
    pub embedding_backend: BackendDescriptor,
    pub embedding_settings: crate::registry::EmbeddingSettings,
    pub selection_metric: SelectionMetric,
    pub ngrams: NgramRange,
    pub top_k: usize,
    /// Answers present when the scores were computed.
    pub scored_answers: usize,
}

/// Everything identifying the run that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Start time of the generation run this report derives from.
    pub created_unix: u64,
    pub config_hash: String,
    pub corpus_docs: usize,
    pub dataset_records: usize,
    pub normalization: String,
    pub embedding_backend: BackendDescriptor,
    pub generation_backend: String,
    pub selection_metric: SelectionMetric,
    pub ngrams: NgramRange,
    pub top_k: usize,
}

/// One table cell: a correlation, or an explicit reason there is none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorrelationCell {
    Ok(CorrelationResult),
    /// Enough points, but the correlation is undefined on them.
    Degenerate {
        n: usize,
        reason: String,
    },
    /// Fewer than three points.
    InsufficientData {
        n: usize,
    },
}

impl CorrelationCell {
    pub fn display(&self) -> String {
        match self {
            Self::Ok(c) => format!("r={:.3} (p={:.3}, n={})", c.r, c.p_value, c.n),
            Self::Degenerate { n, reason } => format!("NA ({reason}, n={n})"),
            Self::InsufficientData { n } => format!("NA (n={n})"),
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Self::Ok(_) => "ok",
            Self::Degenerate { .. } => "degenerate",
            Self::InsufficientData { .. } => "insufficient_data",
        }
    }
}

/// Cells for one row: per subcorpus and combined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCells {
    pub expert: CorrelationCell,
    pub general_public: CorrelationCell,
    pub combined: CorrelationCell,
}

impl RowCells {
    fn columns(&self) -> [(&'static str, &CorrelationCell); 3] {
        [
            ("EX", &self.expert),
            ("GP", &self.general_public),
            ("full", &self.combined),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFrequencyRow {
    pub query_type: QueryType,
    #[serde(flatten)]
    pub cells: RowCells,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySliceRow {
    /// "head", "tail", or "overall".
    pub slice: String,
    #[serde(flatten)]
    pub cells: RowCells,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub provenance: Provenance,
    /// One row per query type, correlating answer score with log10 term
    /// frequency inside that query type.
    pub score_vs_freq: Vec<ScoreFrequencyRow>,
    /// Head, tail, and overall rows over all query types.
    pub frequency_slices: Vec<FrequencySliceRow>,
    /// Usable record count after flags and zero frequencies.
    pub correlated_records: usize,
}

const X_LABEL: &str = "log10 term doc frequency";
const Y_LABEL: &str = "answer score f1";

/// Correlate score against log frequency for the records passing `keep`.
fn cell_for<F>(scores: &[RecordScore], keep: F) -> CorrelationCell
where
    F: Fn(&RecordScore) -> bool,
{
    let selected: Vec<&RecordScore> = scores
        .iter()
        .filter(|s| s.usable_for_correlation() && keep(s))
        .collect();
    let freqs: Vec<u64> = selected.iter().map(|s| s.term_doc_freq).collect();
    let logs = log_freq(&freqs);
    // usable_for_correlation already excludes zeros, so nothing is dropped.
    debug_assert_eq!(logs.values.len(), selected.len());
    let ys: Vec<f64> = selected
        .iter()
        .map(|s| s.f1.expect("usable records have scores"))
        .collect();
    let n = selected.len();
    if n < 3 {
        return CorrelationCell::InsufficientData { n };
    }
    match correlate_labeled(&logs.values, &ys, X_LABEL, Y_LABEL) {
        Ok(result) => CorrelationCell::Ok(result),
        Err(StatsError::TooFew(n)) => CorrelationCell::InsufficientData { n },
        Err(StatsError::ConstantSeries(series)) => CorrelationCell::Degenerate {
            n,
            reason: format!("{series} series is constant"),
        },
        Err(other) => CorrelationCell::Degenerate {
            n,
            reason: other.to_string(),
        },
    }
}

fn row_cells<F>(scores: &[RecordScore], keep: F) -> RowCells
where
    F: Fn(&RecordScore) -> bool + Copy,
{
    RowCells {
        expert: cell_for(scores, |s| s.subcorpus == Subcorpus::Expert && keep(s)),
        general_public: cell_for(scores, |s| {
            s.subcorpus == Subcorpus::GeneralPublic && keep(s)
        }),
        combined: cell_for(scores, keep),
    }
}

/// Assemble the full report from scored records and the head/tail choice.
pub fn build_report(
    provenance: Provenance,
    scores: &[RecordScore],
    selection: &HeadTailSelection,
) -> CorrelationReport {
    let score_vs_freq = QueryType::ALL
        .iter()
        .map(|&query_type| ScoreFrequencyRow {
            query_type,
            cells: row_cells(scores, |s| s.query_type == query_type),
        })
        .collect();

    let head: BTreeSet<&str> = selection.head.iter().map(|t| t.term.as_str()).collect();
    let tail: BTreeSet<&str> = selection.tail.iter().map(|t| t.term.as_str()).collect();
    let frequency_slices = vec![
        FrequencySliceRow {
            slice: "head".to_owned(),
            cells: row_cells(scores, |s| head.contains(s.term.as_str())),
        },
        FrequencySliceRow {
            slice: "tail".to_owned(),
            cells: row_cells(scores, |s| tail.contains(s.term.as_str())),
        },
        FrequencySliceRow {
            slice: "overall".to_owned(),
            cells: row_cells(scores, |_| true),
        },
    ];

    CorrelationReport {
        provenance,
        score_vs_freq,
        frequency_slices,
        correlated_records: scores.iter().filter(|s| s.usable_for_correlation()).count(),
    }
}

/// One scatter point backing the correlations, for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub record_id: String,
    pub term: String,
    pub query_type: QueryType,
    pub subcorpus: Subcorpus,
    pub term_doc_freq: u64,
    pub log10_doc_freq: f64,
    pub f1: f64,
}

pub fn scatter_rows(scores: &[RecordScore]) -> Vec<ScatterRow> {
    scores
        .iter()
        .filter(|s| s.usable_for_correlation())
        .map(|s| ScatterRow {
            record_id: s.record_id.clone(),
            term: s.term.clone(),
            query_type: s.query_type,
            subcorpus: s.subcorpus,
            term_doc_freq: s.term_doc_freq,
            log10_doc_freq: (s.term_doc_freq as f64).log10(),
            f1: s.f1.expect("usable records have scores"),
        })
        .collect()
}

pub fn write_scatter_csv(rows: &[ScatterRow], path: &Path) -> Result<(), ReportError> {
    let to_csv_err = |source: csv::Error| ReportError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(to_csv_err)?;
    }
    writer.flush().map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// JSON emitter. Output is deterministic: serializing the same report twice
/// gives identical bytes, and parsing them back gives an equal value.
pub fn write_report_json(report: &CorrelationReport, path: &Path) -> Result<(), ReportError> {
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, body + "\n").map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// CSV emitter: one line per cell, NA cells included with empty numbers.
pub fn write_report_csv(report: &CorrelationReport, path: &Path) -> Result<(), ReportError> {
    let to_csv_err = |source: csv::Error| ReportError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_csv_err)?;
    writer
        .write_record([
            "table", "row", "column", "status", "r", "p_value", "n", "detail",
        ])
        .map_err(to_csv_err)?;
    let mut write_cells = |table: &str, row: &str, cells: &RowCells| -> Result<(), csv::Error> {
        for (column, cell) in cells.columns() {
            let record = match cell {
                CorrelationCell::Ok(c) => [
                    table.to_owned(),
                    row.to_owned(),
                    column.to_owned(),
                    "ok".to_owned(),
                    c.r.to_string(),
                    c.p_value.to_string(),
                    c.n.to_string(),
                    String::new(),
                ],
                CorrelationCell::Degenerate { n, reason } => [
                    table.to_owned(),
                    row.to_owned(),
                    column.to_owned(),
                    "degenerate".to_owned(),
                    String::new(),
                    String::new(),
                    n.to_string(),
                    reason.clone(),
                ],
                CorrelationCell::InsufficientData { n } => [
                    table.to_owned(),
                    row.to_owned(),
                    column.to_owned(),
                    "insufficient_data".to_owned(),
                    String::new(),
                    String::new(),
                    n.to_string(),
                    String::new(),
                ],
            };
            writer.write_record(&record)?;
        }
        Ok(())
    };
    for row in &report.score_vs_freq {
        write_cells("score_vs_freq", row.query_type.code(), &row.cells).map_err(to_csv_err)?;
    }
    for row in &report.frequency_slices {
        write_cells("frequency_slices", &row.slice, &row.cells).map_err(to_csv_err)?;
    }
    writer.flush().map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Markdown emitter for human review.
pub fn write_report_md(report: &CorrelationReport, path: &Path) -> Result<(), ReportError> {
    let mut out = Vec::new();
    let p = &report.provenance;
    writeln!(out, "# Correlation report").unwrap();
    writeln!(out).unwrap();
    writeln!(
        out,
        "Run `{}` at unix time {}; corpus of {} documents; {} dataset records ({} usable for correlation).",
        p.config_hash, p.created_unix, p.corpus_docs, p.dataset_records, report.correlated_records
    )
    .unwrap();
    writeln!(
        out,
        "Embedding: {} (dim {}). Generation: {}. N-grams {}..={} ranked by {} (top {}).",
        p.embedding_backend.name,
        p.embedding_backend.dim,
        p.generation_backend,
        p.ngrams.min(),
        p.ngrams.max(),
        p.selection_metric,
        p.top_k
    )
    .unwrap();
    writeln!(out).unwrap();
    writeln!(out, "## Answer score vs term frequency").unwrap();
    writeln!(out).unwrap();
    writeln!(out, "| Query type | EX | GP | full |").unwrap();
    writeln!(out, "|---|---|---|---|").unwrap();
    for row in &report.score_vs_freq {
        writeln!(
            out,
            "| {} | {} | {} | {} |",
            row.query_type.code(),
            row.cells.expert.display(),
            row.cells.general_public.display(),
            row.cells.combined.display()
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "## Head and tail frequency slices").unwrap();
    writeln!(out).unwrap();
    writeln!(out, "| Slice | EX | GP | full |").unwrap();
    writeln!(out, "|---|---|---|---|").unwrap();
    for row in &report.frequency_slices {
        writeln!(
            out,
            "| {} | {} | {} | {} |",
            row.slice,
            row.cells.expert.display(),
            row.cells.general_public.display(),
            row.cells.combined.display()
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}
