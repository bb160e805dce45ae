//! Frequency-based term selection: the most and least attested terms.
//!
//! Terms are ranked by how many corpus documents contain them. The "head"
//! is the best-attested slice and the "tail" the worst-attested nonzero
//! slice, selected per subcorpus so expert and general-public terms are
//! represented evenly. Terms never seen in the corpus cannot sit in a log
//! scale and are reported separately instead of silently dropped.

use crate::dataset::{QARecord, Subcorpus};
use crate::index::DocFreqIndex;
use crate::normalize::{Phrase, PhraseError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum HeadTailError {
    #[error("record {record_id:?}: {source}")]
    BadTerm {
        record_id: String,
        #[source]
        source: PhraseError,
    },
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

/// A term with its corpus attestation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermFrequencyRecord {
    /// Normalized surface form, used as the term's identity.
    pub term: String,
    /// Subcorpus of the record where the term first appeared.
    pub subcorpus: Subcorpus,
    pub doc_freq: u64,
}

/// Frequency rank for every distinct term in the dataset, most frequent
/// first (ties alphabetical). Terms are deduplicated on their normalized
/// form; the first record to mention a term decides its subcorpus.
pub fn rank_terms(
    records: &[QARecord],
    index: &DocFreqIndex,
) -> Result<Vec<TermFrequencyRecord>, HeadTailError> {
    let mut seen = BTreeSet::new();
    let mut ranked = Vec::new();
    for record in records {
        let phrase = Phrase::parse(&record.term).map_err(|source| HeadTailError::BadTerm {
            record_id: record.record_id.clone(),
            source,
        })?;
        let term = phrase.surface();
        if !seen.insert(term.clone()) {
            continue;
        }
        ranked.push(TermFrequencyRecord {
            term,
            subcorpus: record.subcorpus,
            doc_freq: index.doc_freq(&phrase) as u64,
        });
    }
    ranked.sort_by(|a, b| b.doc_freq.cmp(&a.doc_freq).then(a.term.cmp(&b.term)));
    Ok(ranked)
}

/// The selected extremes of the frequency ranking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadTailSelection {
    pub head: Vec<TermFrequencyRecord>,
    pub tail: Vec<TermFrequencyRecord>,
    /// Terms with zero corpus attestation, excluded from both slices.
    pub excluded_zero: Vec<String>,
    /// Requested size of each (slice, subcorpus) quadrant.
    pub per_quadrant: usize,
}

impl HeadTailSelection {
    pub fn head_terms(&self) -> Vec<&str> {
        self.head.iter().map(|t| t.term.as_str()).collect()
    }

    pub fn tail_terms(&self) -> Vec<&str> {
        self.tail.iter().map(|t| t.term.as_str()).collect()
    }
}

/// Pick `per_quadrant` head and tail terms from each subcorpus.
///
/// Within one subcorpus the head is the top of the ranking and the tail the
/// bottom of its nonzero part; a term is never selected twice, so a scarce
/// subcorpus fills the head first and the tail gets what remains, with a
/// warning about the shortfall.
pub fn select_head_tail(ranked: &[TermFrequencyRecord], per_quadrant: usize) -> HeadTailSelection {
    let mut head = Vec::new();
    let mut tail = Vec::new();
    let mut excluded_zero: Vec<String> = ranked
        .iter()
        .filter(|t| t.doc_freq == 0)
        .map(|t| t.term.clone())
        .collect();
    excluded_zero.sort();

    for subcorpus in Subcorpus::ALL {
        let nonzero: Vec<&TermFrequencyRecord> = ranked
            .iter()
            .filter(|t| t.subcorpus == subcorpus && t.doc_freq > 0)
            .collect();
        if nonzero.len() < 2 * per_quadrant {
            log::warn!(
                "subcorpus {subcorpus} has {} usable terms, fewer than the {} needed for full head and tail quadrants",
                nonzero.len(),
                2 * per_quadrant
            );
        }
        let head_len = per_quadrant.min(nonzero.len());
        head.extend(nonzero[..head_len].iter().map(|&t| t.clone()));
        let tail_len = per_quadrant.min(nonzero.len() - head_len);
        tail.extend(
            nonzero[nonzero.len() - tail_len..]
                .iter()
                .map(|&t| t.clone()),
        );
    }
    // Keep each slice in ranking order regardless of subcorpus interleaving.
    head.sort_by(|a, b| b.doc_freq.cmp(&a.doc_freq).then(a.term.cmp(&b.term)));
    tail.sort_by(|a, b| b.doc_freq.cmp(&a.doc_freq).then(a.term.cmp(&b.term)));
    HeadTailSelection {
        head,
        tail,
        excluded_zero,
        per_quadrant,
    }
}

/// Where and how often one term occurs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermTrace {
    pub term: String,
    pub doc_freq: u64,
    /// Occurrences summed over the listed documents.
    pub listed_occurrences: u64,
    /// Up to the requested number of documents, ascending by doc id.
    pub docs: Vec<TermDocOccurrences>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermDocOccurrences {
    pub doc_id: String,
    pub count: u64,
}

/// Occurrence listing for `term` in up to `limit` documents.
pub fn trace_term(
    index: &DocFreqIndex,
    term: &str,
    limit: usize,
) -> Result<TermTrace, HeadTailError> {
    let phrase = Phrase::parse(term).map_err(|source| HeadTailError::BadTerm {
        record_id: term.to_owned(),
        source,
    })?;
    let docs: Vec<TermDocOccurrences> = index
        .occurrences(&phrase, limit)
        .into_iter()
        .map(|(doc_id, count)| TermDocOccurrences {
            doc_id: doc_id.to_owned(),
            count: count as u64,
        })
        .collect();
    Ok(TermTrace {
        term: phrase.surface(),
        doc_freq: index.doc_freq(&phrase) as u64,
        listed_occurrences: docs.iter().map(|d| d.count).sum(),
        docs,
    })
}

/// Write a selection as pretty JSON.
pub fn write_selection_json(
    selection: &HeadTailSelection,
    path: &Path,
) -> Result<(), HeadTailError> {
    let body = serde_json::to_string_pretty(selection).expect("selection serializes");
    std::fs::write(path, body + "\n").map_err(|source| HeadTailError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write a selection as CSV with a `slice` column, head rows first.
pub fn write_selection_csv(
    selection: &HeadTailSelection,
    path: &Path,
) -> Result<(), HeadTailError> {
    let to_csv_err = |source: csv::Error| HeadTailError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_csv_err)?;
    writer
        .write_record(["slice", "term", "subcorpus", "doc_freq"])
        .map_err(to_csv_err)?;
    for (slice, terms) in [("head", &selection.head), ("tail", &selection.tail)] {
        for t in terms {
            writer
                .write_record([slice, &t.term, t.subcorpus.code(), &t.doc_freq.to_string()])
                .map_err(to_csv_err)?;
        }
    }
    writer.flush().map_err(|source| HeadTailError::Io {
        path: path.display().to_string(),
        source,
    })
}
