//! Text normalization shared by indexing and querying.
//!
//! Every piece of text that touches the document-frequency index goes through
//! [`normalize_text`]: Unicode lowercasing, then everything outside
//! letters/digits becomes a token boundary. The same function runs at index
//! time and at query time, so counts are comparable no matter where a phrase
//! came from. The scheme is versioned via [`NORMALIZATION_VERSION`] and the
//! tag is stored in index metadata.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Version tag recorded in index metadata. Bump when the rules change.
pub const NORMALIZATION_VERSION: &str = "unicode-lower-alnum-v1";

/// Lowercase, strip punctuation and special characters, split on whitespace.
///
/// Lowercasing happens first so that multi-character case mappings (e.g.
/// `İ` → `i` + combining dot) have their non-alphanumeric residue stripped,
/// keeping the function idempotent. Hyphens count as special characters, so
/// `"testosterone-inhibiting"` yields two tokens.
pub fn normalize_text(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Errors from constructing a [`Phrase`].
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PhraseError {
    /// The input contained no alphanumeric content.
    #[error("phrase is empty after normalization: {0:?}")]
    Empty(String),
}

/// A nonempty sequence of normalized tokens.
///
/// Construction goes through [`Phrase::parse`] (or [`Phrase::from_tokens`]),
/// which re-normalizes its input; a `Phrase` therefore never holds uppercase
/// characters, punctuation, or empty tokens. Index queries take `&Phrase`, so
/// the "empty phrase" error surfaces exactly once, at construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Phrase {
    tokens: Vec<String>,
}

impl Phrase {
    /// Normalize raw text into a phrase. Fails if nothing survives.
    pub fn parse(text: &str) -> Result<Self, PhraseError> {
        let tokens = normalize_text(text);
        if tokens.is_empty() {
            return Err(PhraseError::Empty(text.to_owned()));
        }
        Ok(Self { tokens })
    }

    /// Build a phrase from pre-tokenized input, re-normalizing each token.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, PhraseError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let joined = tokens
            .into_iter()
            .map(|t| t.as_ref().to_owned())
            .collect::<Vec<_>>()
            .join(" ");
        Self::parse(&joined)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Canonical surface form: tokens joined by single spaces.
    pub fn surface(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for Phrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface())
    }
}

impl TryFrom<Vec<String>> for Phrase {
    type Error = PhraseError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        Self::from_tokens(tokens)
    }
}

impl From<Phrase> for Vec<String> {
    fn from(p: Phrase) -> Self {
        p.tokens
    }
}
