//! Corpus input formats.
//!
//! Two loaders feed the index builder: JSONL (`{"doc_id": ..., "text": ...}`
//! per line) and a directory of plain-text files where the filename is the
//! document id. Both surface parse failures with the offending line or file.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// One raw document. `text` may be empty; it just contributes nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unreadable record at line {line} of {path}: {source}")]
    BadRecord {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("document {doc_id:?} ({path}) has an empty doc_id")]
    EmptyDocId { path: String, doc_id: String },
    #[error("file name {path:?} is not valid UTF-8, cannot use it as a doc_id")]
    BadFileName { path: String },
}

/// Read a JSONL corpus. Blank lines are skipped; anything else must parse.
pub fn read_jsonl(path: &Path) -> Result<Vec<DocumentRecord>, CorpusError> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocumentRecord =
            serde_json::from_str(&line).map_err(|source| CorpusError::BadRecord {
                path: display.clone(),
                line: idx + 1,
                source,
            })?;
        if record.doc_id.is_empty() {
            return Err(CorpusError::EmptyDocId {
                path: display.clone(),
                doc_id: record.doc_id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Read every regular file in a directory as one document (filename = doc_id).
pub fn read_text_dir(dir: &Path) -> Result<Vec<DocumentRecord>, CorpusError> {
    let display = dir.display().to_string();
    let mut records = Vec::new();
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let doc_id = path
            .file_name()
            .and_then(|n| n.to_str())
            .map(str::to_owned)
            .ok_or_else(|| CorpusError::BadFileName {
                path: path.display().to_string(),
            })?;
        let text = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        records.push(DocumentRecord { doc_id, text });
    }
    // Directory iteration order is platform-dependent; pin it down.
    records.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(records)
}
