//! Prompt construction for typed QA queries.

use crate::dataset::QueryType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("failed to read templates {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("templates {path} are not valid TOML: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("template for {query_type} does not mention {{term}}")]
    MissingPlaceholder { query_type: QueryType },
}

/// The preamble and per-type question templates. Every template must
/// contain the literal `{term}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub preamble: String,
    pub definition: String,
    pub example: String,
    pub denomination: String,
    pub paraphrase: String,
    pub explanation: String,
    /// Spare phrasings kept alongside the active set, keyed by a free-form
    /// label, for experiments that swap question styles.
    pub alternates: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        let mut alternates = BTreeMap::new();
        alternates.insert("plain_what_is".to_owned(), "What is {term}".to_owned());
        Self {
            preamble: "You are a medical expert. Answer the following question in a short sentence"
                .to_owned(),
            definition: "Give a definition for {term}".to_owned(),
            example: "Give examples of {term}".to_owned(),
            denomination: "Give another denomination for {term}".to_owned(),
            paraphrase: "Give a paraphrase for {term}".to_owned(),
            explanation: "Give an explanation for {term}".to_owned(),
            alternates,
        }
    }
}

impl PromptTemplates {
    /// Load templates from a TOML file; absent fields keep their defaults.
    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let display = path.display().to_string();
        let content = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: display.clone(),
            source,
        })?;
        let templates: Self = toml::from_str(&content).map_err(|source| PromptError::Parse {
            path: display,
            source,
        })?;
        templates.validate()?;
        Ok(templates)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for query_type in QueryType::ALL {
            if !self.template_for(query_type).contains("{term}") {
                return Err(PromptError::MissingPlaceholder { query_type });
            }
        }
        Ok(())
    }

    pub fn template_for(&self, query_type: QueryType) -> &str {
        match query_type {
            QueryType::Definition => &self.definition,
            QueryType::Example => &self.example,
            QueryType::Denomination => &self.denomination,
            QueryType::Paraphrase => &self.paraphrase,
            QueryType::Explanation => &self.explanation,
        }
    }

    /// The question text alone, with the term substituted in.
    pub fn question(&self, query_type: QueryType, term: &str) -> String {
        self.template_for(query_type).replace("{term}", term)
    }

    /// The full prompt: preamble, newline, then the question.
    pub fn build_query(&self, query_type: QueryType, term: &str) -> String {
        format!("{}\n{}", self.preamble, self.question(query_type, term))
    }
}
