//! QA dataset records: terms, typed questions, and gold answers.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad record at {path} line {line}: {message}")]
    BadRecord {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dataset {path} repeats record_id {record_id:?}")]
    DuplicateRecordId { path: String, record_id: String },
    #[error("dataset {path} has unsupported extension; expected .jsonl or .csv")]
    UnsupportedFormat { path: String },
}

/// The linguistic relation a question asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryType {
    #[serde(rename = "DEF")]
    Definition,
    #[serde(rename = "EX")]
    Example,
    #[serde(rename = "DEN")]
    Denomination,
    #[serde(rename = "PARA")]
    Paraphrase,
    #[serde(rename = "EXP")]
    Explanation,
}

impl QueryType {
    pub const ALL: [QueryType; 5] = [
        QueryType::Definition,
        QueryType::Example,
        QueryType::Denomination,
        QueryType::Paraphrase,
        QueryType::Explanation,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Self::Definition => "DEF",
            Self::Example => "EX",
            Self::Denomination => "DEN",
            Self::Paraphrase => "PARA",
            Self::Explanation => "EXP",
        }
    }
}

impl std::fmt::Display for QueryType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for QueryType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "DEF" => Ok(Self::Definition),
            "EX" => Ok(Self::Example),
            "DEN" => Ok(Self::Denomination),
            "PARA" => Ok(Self::Paraphrase),
            "EXP" => Ok(Self::Explanation),
            other => Err(format!(
                "unknown query type {other:?}; expected DEF, EX, DEN, PARA, or EXP"
            )),
        }
    }
}

/// Which answer-style slice of the dataset a record belongs to: expert
/// answers or general-public answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subcorpus {
    #[serde(rename = "EX")]
    Expert,
    #[serde(rename = "GP")]
    GeneralPublic,
}

impl Subcorpus {
    pub const ALL: [Subcorpus; 2] = [Subcorpus::Expert, Subcorpus::GeneralPublic];

    pub fn code(&self) -> &'static str {
        match self {
            Self::Expert => "EX",
            Self::GeneralPublic => "GP",
        }
    }
}

impl std::fmt::Display for Subcorpus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for Subcorpus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "EX" => Ok(Self::Expert),
            "GP" => Ok(Self::GeneralPublic),
            other => Err(format!("unknown subcorpus {other:?}; expected EX or GP")),
        }
    }
}

/// Which upstream collection a record was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceCorpus {
    ClassYn,
    Clear,
}

/// One QA item: a term, the question asked about it, and the gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub record_id: String,
    pub term: String,
    pub query_type: QueryType,
    pub question: String,
    pub gold_answer: String,
    pub subcorpus: Subcorpus,
    pub source: SourceCorpus,
}

/// Load records from `.jsonl` or `.csv`, dispatching on the extension.
/// Errors carry 1-based line numbers and name unknown enum codes.
pub fn load_dataset(path: &Path) -> Result<Vec<QARecord>, DatasetError> {
    let display = path.display().to_string();
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => load_jsonl(path, &display),
        Some("csv") => load_csv(path, &display),
        _ => Err(DatasetError::UnsupportedFormat { path: display }),
    }
}

fn check_unique(records: &[QARecord], path: &str) -> Result<(), DatasetError> {
    let mut seen = std::collections::BTreeSet::new();
    for record in records {
        if !seen.insert(&record.record_id) {
            return Err(DatasetError::DuplicateRecordId {
                path: path.to_owned(),
                record_id: record.record_id.clone(),
            });
        }
    }
    Ok(())
}

fn load_jsonl(path: &Path, display: &str) -> Result<Vec<QARecord>, DatasetError> {
    let content = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: display.to_owned(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: QARecord = serde_json::from_str(line).map_err(|e| DatasetError::BadRecord {
            path: display.to_owned(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    check_unique(&records, display)?;
    Ok(records)
}

fn load_csv(path: &Path, display: &str) -> Result<Vec<QARecord>, DatasetError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => DatasetError::Io {
            path: display.to_owned(),
            source: std::io::Error::other(e.to_string()),
        },
        _ => DatasetError::BadRecord {
            path: display.to_owned(),
            line: 1,
            message: e.to_string(),
        },
    })?;
    let mut records = Vec::new();
    for (idx, row) in reader.deserialize::<QARecord>().enumerate() {
        // Row 1 is the header, so data rows start at line 2.
        let record = row.map_err(|e| DatasetError::BadRecord {
            path: display.to_owned(),
            line: idx + 2,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    check_unique(&records, display)?;
    Ok(records)
}

/// Record counts per query type, in a stable order.
pub fn type_counts(records: &[QARecord]) -> BTreeMap<QueryType, usize> {
    let mut counts = BTreeMap::new();
    for record in records {
        *counts.entry(record.query_type).or_insert(0) += 1;
    }
    counts
}
