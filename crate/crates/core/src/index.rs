//! Positional inverted index answering document-frequency queries.
//!
//! The index maps each token to its postings: for every document containing
//! the token, the sorted list of token offsets. Multi-word phrases are
//! resolved by position intersection, so a phrase matches only as a
//! contiguous token run (no gaps). The query contract is "identical to a
//! brute-force scan of the normalized corpus"; the structure is an
//! implementation detail.
//!
//! Internal document ids are assigned in ascending `doc_id` order at build
//! time, which makes every document-list result deterministic and lets
//! `containing_docs` return ids in ascending order by construction.
//!
//! After build the index is immutable; queries take `&self` and the type is
//! `Send + Sync`, so it can be shared freely across threads.

use crate::corpus::DocumentRecord;
use crate::normalize::{normalize_text, Phrase, NORMALIZATION_VERSION};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

const INDEX_MAGIC: &str = "termtrace-docfreq-index";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate doc_id: {0:?}")]
    DuplicateDocId(String),
    #[error("doc_id must be nonempty")]
    EmptyDocId,
    #[error("failed to {action} index file {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("index file {path} is not valid: {source}")]
    Corrupt {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("index file {path} has magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: String,
        found: String,
        expected: &'static str,
    },
    #[error("index file {path} has version {found}, this build reads version {expected}")]
    BadVersion {
        path: String,
        found: u32,
        expected: u32,
    },
}

/// Postings for one token in one document: sorted token offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Posting {
    doc: u32,
    positions: Vec<u32>,
}

/// Description of how the index was built, stored alongside the postings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMetadata {
    pub normalization: String,
    pub doc_count: usize,
    pub token_count: u64,
}

/// Immutable phrase → document-frequency index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocFreqIndex {
    magic: String,
    version: u32,
    metadata: IndexMetadata,
    /// Document ids in ascending order; position = internal id.
    doc_ids: Vec<String>,
    /// token → postings sorted by internal doc id.
    postings: BTreeMap<String, Vec<Posting>>,
}

impl DocFreqIndex {
    /// Build an index from documents. `doc_id`s must be unique and nonempty.
    pub fn build<I>(records: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = DocumentRecord>,
    {
        let mut records: Vec<DocumentRecord> = records.into_iter().collect();
        if records.iter().any(|r| r.doc_id.is_empty()) {
            return Err(IndexError::EmptyDocId);
        }
        records.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        for pair in records.windows(2) {
            if pair[0].doc_id == pair[1].doc_id {
                return Err(IndexError::DuplicateDocId(pair[0].doc_id.clone()));
            }
        }

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut token_count: u64 = 0;
        for (internal, record) in records.iter().enumerate() {
            let internal = internal as u32;
            for (pos, token) in normalize_text(&record.text).into_iter().enumerate() {
                token_count += 1;
                let entry = postings.entry(token).or_default();
                match entry.last_mut() {
                    Some(last) if last.doc == internal => last.positions.push(pos as u32),
                    _ => entry.push(Posting {
                        doc: internal,
                        positions: vec![pos as u32],
                    }),
                }
            }
        }

        let doc_ids: Vec<String> = records.into_iter().map(|r| r.doc_id).collect();
        Ok(Self {
            magic: INDEX_MAGIC.to_owned(),
            version: INDEX_VERSION,
            metadata: IndexMetadata {
                normalization: NORMALIZATION_VERSION.to_owned(),
                doc_count: doc_ids.len(),
                token_count,
            },
            doc_ids,
            postings,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn metadata(&self) -> &IndexMetadata {
        &self.metadata
    }

    /// Number of distinct documents containing `phrase` at least once.
    pub fn doc_freq(&self, phrase: &Phrase) -> usize {
        match phrase.tokens() {
            [single] => self.postings.get(single).map_or(0, Vec::len),
            _ => self.phrase_docs(phrase).len(),
        }
    }

    /// Number of distinct documents containing both `a` and `b`, anywhere.
    pub fn co_doc_freq(&self, a: &Phrase, b: &Phrase) -> usize {
        let docs_a = self.phrase_docs(a);
        let docs_b = self.phrase_docs(b);
        intersection_len(&docs_a, &docs_b)
    }

    /// Up to `limit` doc_ids containing `phrase`, in ascending doc_id order.
    pub fn containing_docs(&self, phrase: &Phrase, limit: usize) -> Vec<&str> {
        self.phrase_docs(phrase)
            .into_iter()
            .take(limit)
            .map(|d| self.doc_ids[d as usize].as_str())
            .collect()
    }

    /// Up to `limit` (doc_id, occurrence count) rows for `phrase`, ascending
    /// by doc_id. A document appearing here has at least one occurrence.
    pub fn occurrences(&self, phrase: &Phrase, limit: usize) -> Vec<(&str, usize)> {
        self.phrase_occurrences(phrase)
            .into_iter()
            .take(limit)
            .map(|(d, n)| (self.doc_ids[d as usize].as_str(), n))
            .collect()
    }

    /// Internal ids of documents containing the phrase, ascending.
    fn phrase_docs(&self, phrase: &Phrase) -> Vec<u32> {
        match phrase.tokens() {
            [single] => self
                .postings
                .get(single)
                .map_or_else(Vec::new, |ps| ps.iter().map(|p| p.doc).collect()),
            _ => self
                .phrase_occurrences(phrase)
                .into_iter()
                .map(|(d, _)| d)
                .collect(),
        }
    }

    /// (internal id, occurrence count) for documents containing the phrase.
    fn phrase_occurrences(&self, phrase: &Phrase) -> Vec<(u32, usize)> {
        let tokens = phrase.tokens();
        let mut lists = Vec::with_capacity(tokens.len());
        for token in tokens {
            match self.postings.get(token) {
                Some(ps) => lists.push(ps),
                None => return Vec::new(),
            }
        }
        // Drive the intersection from the rarest token's postings.
        let (lead_idx, lead) = lists
            .iter()
            .enumerate()
            .min_by_key(|(_, ps)| ps.len())
            .expect("phrase is nonempty");

        let mut out = Vec::new();
        'docs: for posting in lead.iter() {
            let doc = posting.doc;
            let mut per_token = Vec::with_capacity(lists.len());
            for (i, list) in lists.iter().enumerate() {
                if i == lead_idx {
                    per_token.push(&posting.positions);
                    continue;
                }
                match list.binary_search_by_key(&doc, |p| p.doc) {
                    Ok(j) => per_token.push(&list[j].positions),
                    Err(_) => continue 'docs,
                }
            }
            // per_token is in token order, so per_token[0] anchors the start
            // offsets; token i must then appear at start + i.
            let count =
                per_token[0]
                    .iter()
                    .filter(|&&start| {
                        per_token.iter().enumerate().skip(1).all(|(i, positions)| {
                            positions.binary_search(&(start + i as u32)).is_ok()
                        })
                    })
                    .count();
            if count > 0 {
                out.push((doc, count));
            }
        }
        out
    }

    /// Write the index as versioned JSON. Building from the same corpus
    /// always produces byte-identical files.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let display = path.display().to_string();
        let file = fs::File::create(path).map_err(|source| IndexError::Io {
            action: "create",
            path: display.clone(),
            source,
        })?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer(&mut writer, self).map_err(|source| IndexError::Corrupt {
            path: display.clone(),
            source,
        })?;
        writer
            .write_all(b"\n")
            .and_then(|_| writer.flush())
            .map_err(|source| IndexError::Io {
                action: "write",
                path: display,
                source,
            })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let display = path.display().to_string();
        let file = fs::File::open(path).map_err(|source| IndexError::Io {
            action: "open",
            path: display.clone(),
            source,
        })?;
        let index: Self = serde_json::from_reader(BufReader::new(file)).map_err(|source| {
            IndexError::Corrupt {
                path: display.clone(),
                source,
            }
        })?;
        if index.magic != INDEX_MAGIC {
            return Err(IndexError::BadMagic {
                path: display,
                found: index.magic,
                expected: INDEX_MAGIC,
            });
        }
        if index.version != INDEX_VERSION {
            return Err(IndexError::BadVersion {
                path: display,
                found: index.version,
                expected: INDEX_VERSION,
            });
        }
        Ok(index)
    }
}

/// Size of the intersection of two ascending u32 slices.
fn intersection_len(a: &[u32], b: &[u32]) -> usize {
    let mut count = 0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}
