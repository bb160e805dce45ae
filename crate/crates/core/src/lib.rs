//! Core library for tracing how term frequency in a reference corpus
//! relates to the quality of generated answers about those terms.
//!
//! The pieces compose into one pipeline:
//!
//! 1. [`index`]: a positional inverted index over a JSONL corpus answering
//!    phrase document-frequency and co-occurrence queries.
//! 2. [`harness`]: typed QA prompts ([`prompts`], [`dataset`]) answered by
//!    a pluggable generation backend ([`generation`], [`registry`]), with
//!    crash-safe resume.
//! 3. [`metrics`]: greedy token-matching similarity between answers and
//!    gold references over a pluggable embedding backend ([`embedding`]),
//!    plus n-gram ranking ([`ngram`]).
//! 4. [`headtail`]: selection of the best- and worst-attested terms.
//! 5. [`stats`] and [`report`]: correlation of answer scores with log
//!    corpus frequency, emitted as CSV, JSON, and Markdown.
//!
//! [`pipeline`] wires the stages together behind a single config, and
//! every text comparison anywhere in the crate goes through the one
//! normalizer in [`normalize`].

pub mod corpus;
pub mod dataset;
pub mod embedding;
pub mod generation;
pub mod harness;
pub mod headtail;
pub mod index;
pub mod metrics;
pub mod ngram;
pub mod normalize;
pub mod pipeline;
pub mod prompts;
pub mod registry;
pub mod report;
pub mod stats;
