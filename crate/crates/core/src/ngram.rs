//! N-gram enumeration over normalized token sequences.

use crate::normalize::Phrase;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NgramError {
    #[error("invalid n-gram range {min}..={max}: need 1 <= min <= max")]
    InvalidRange { min: usize, max: usize },
}

/// Inclusive range of n-gram sizes, validated at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRange", into = "RawRange")]
pub struct NgramRange {
    min: usize,
    max: usize,
}

#[derive(Serialize, Deserialize)]
struct RawRange {
    min: usize,
    max: usize,
}

impl TryFrom<RawRange> for NgramRange {
    type Error = NgramError;
    fn try_from(raw: RawRange) -> Result<Self, Self::Error> {
        Self::new(raw.min, raw.max)
    }
}

impl From<NgramRange> for RawRange {
    fn from(r: NgramRange) -> Self {
        Self {
            min: r.min,
            max: r.max,
        }
    }
}

impl NgramRange {
    pub fn new(min: usize, max: usize) -> Result<Self, NgramError> {
        if min == 0 || min > max {
            return Err(NgramError::InvalidRange { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> usize {
        self.min
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> {
        self.min..=self.max
    }
}

impl Default for NgramRange {
    /// Sizes 2 through 5.
    fn default() -> Self {
        Self { min: 2, max: 5 }
    }
}

/// One contiguous token run taken from a longer sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramSpan {
    pub tokens: Vec<String>,
    /// Number of tokens; always `tokens.len()`.
    pub n: usize,
    /// Offset of the first token in the source sequence.
    pub start: usize,
}

impl NgramSpan {
    pub fn phrase(&self) -> Phrase {
        Phrase::from_tokens(self.tokens.clone()).expect("spans are nonempty")
    }

    pub fn surface(&self) -> String {
        self.tokens.join(" ")
    }
}

/// All n-grams of the requested sizes, ordered by start offset and then by
/// size. A sequence shorter than `range.min()` yields nothing.
pub fn enumerate_ngrams(tokens: &[String], range: NgramRange) -> Vec<NgramSpan> {
    let mut spans = Vec::new();
    for start in 0..tokens.len() {
        for n in range.sizes() {
            let Some(end) = start.checked_add(n).filter(|&e| e <= tokens.len()) else {
                break;
            };
            spans.push(NgramSpan {
                tokens: tokens[start..end].to_vec(),
                n,
                start,
            });
        }
    }
    spans
}
