//! Similarity metrics between generated answers and references.
//!
//! The headline metric is a token-level greedy-matching score: each
//! reference token is matched to its most similar candidate token (recall),
//! each candidate token to its most similar reference token (precision),
//! and the two are combined as a harmonic mean. Sentence-level cosine over
//! mean-pooled vectors is available as a cheaper alternative for ranking
//! n-grams.

use crate::embedding::{cosine, BackendError, EmbeddingBackend, EmbeddingVector};
use crate::ngram::{enumerate_ngrams, NgramRange};
use crate::normalize::normalize_text;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot score: the {side} text {text:?} has no tokens")]
    EmptyText { side: &'static str, text: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Precision, recall, and their harmonic mean, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy token-matching score of `candidate` against `reference`.
///
/// Negative cosine values carry no graded similarity signal here, so
/// precision and recall are clamped into [0, 1]; a clamp is logged because
/// it usually means the embedding space is badly scaled for this use.
/// Scoring a text against itself yields exactly 1.0.
pub fn bertscore(
    backend: &dyn EmbeddingBackend,
    candidate: &str,
    reference: &str,
) -> Result<MetricScore, MetricsError> {
    let cand = backend.embed_tokens(candidate)?;
    let reff = backend.embed_tokens(reference)?;
    if cand.vectors.is_empty() {
        return Err(MetricsError::EmptyText {
            side: "candidate",
            text: candidate.to_owned(),
        });
    }
    if reff.vectors.is_empty() {
        return Err(MetricsError::EmptyText {
            side: "reference",
            text: reference.to_owned(),
        });
    }

    let recall = mean_best_match(&reff.vectors, &cand.vectors)?;
    let precision = mean_best_match(&cand.vectors, &reff.vectors)?;
    let precision = clamp_unit(precision, "precision");
    let recall = clamp_unit(recall, "recall");
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricScore {
        precision,
        recall,
        f1,
    })
}

/// Mean over `from` of the best cosine against any vector in `to`.
fn mean_best_match(from: &[EmbeddingVector], to: &[EmbeddingVector]) -> Result<f64, BackendError> {
    let mut total = 0.0;
    for a in from {
        let mut best = f64::NEG_INFINITY;
        for b in to {
            best = best.max(cosine(a, b)?);
        }
        total += best;
    }
    Ok(total / from.len() as f64)
}

fn clamp_unit(value: f64, what: &str) -> f64 {
    if value < 0.0 {
        log::warn!("{what} {value} is negative, clamping to 0");
        0.0
    } else if value > 1.0 {
        log::warn!("{what} {value} exceeds 1, clamping to 1");
        1.0
    } else {
        value
    }
}

/// Cosine similarity between the mean-pooled embeddings of two texts.
pub fn sentence_similarity(
    backend: &dyn EmbeddingBackend,
    left: &str,
    right: &str,
) -> Result<f64, MetricsError> {
    let pair = [left.to_owned(), right.to_owned()];
    let vectors = backend.embed_sentences(&pair).map_err(|e| match e {
        BackendError::EmptyInput(text) => MetricsError::EmptyText {
            side: if text == left { "left" } else { "right" },
            text,
        },
        other => MetricsError::Backend(other),
    })?;
    Ok(cosine(&vectors[0], &vectors[1])?)
}

/// How an n-gram is scored against the term when ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    /// Sentence-level cosine of mean-pooled vectors.
    #[default]
    Cosine,
    /// F1 of the greedy token-matching score.
    BertScore,
}

impl std::fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::BertScore => "bert_score",
        })
    }
}

impl std::str::FromStr for SelectionMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "bert_score" => Ok(Self::BertScore),
            other => Err(format!(
                "unknown selection metric {other:?}; expected cosine or bert_score"
            )),
        }
    }
}

/// An n-gram ranked against a term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNgram {
    pub ngram: String,
    pub n: usize,
    pub start: usize,
    pub similarity: f64,
    /// Probability that a document containing the term also contains this
    /// n-gram; filled in by callers that hold a corpus index.
    pub co_prob: Option<f64>,
}

/// The `k` n-grams of `text` most similar to `term`.
///
/// Duplicate surfaces are collapsed to their first occurrence before
/// ranking. Ties are broken toward longer n-grams, then earlier offsets,
/// so results are deterministic.
pub fn top_k_ngrams(
    backend: &dyn EmbeddingBackend,
    term: &str,
    text: &str,
    range: NgramRange,
    k: usize,
    metric: SelectionMetric,
) -> Result<Vec<ScoredNgram>, MetricsError> {
    let tokens = normalize_text(text);
    let mut seen = std::collections::BTreeSet::new();
    let mut scored = Vec::new();
    for span in enumerate_ngrams(&tokens, range) {
        let surface = span.surface();
        if !seen.insert(surface.clone()) {
            continue;
        }
        let similarity = match metric {
            SelectionMetric::Cosine => sentence_similarity(backend, term, &surface)?,
            SelectionMetric::BertScore => bertscore(backend, &surface, term)?.f1,
        };
        scored.push(ScoredNgram {
            ngram: surface,
            n: span.n,
            start: span.start,
            similarity,
            co_prob: None,
        });
    }
    scored.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .expect("similarities are finite")
            .then(b.n.cmp(&a.n))
            .then(a.start.cmp(&b.start))
    });
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{FixedVectorBackend, HashedBackend};

    fn table(entries: &[(&str, &[f64])]) -> FixedVectorBackend {
        FixedVectorBackend::new(
            entries
                .iter()
                .map(|(t, v)| ((*t).to_owned(), v.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn hand_checked_orthogonal_case() {
        // Reference tokens both match g exactly, so recall is 1. Only half
        // the candidate tokens match anything, so precision is 0.5.
        let backend = table(&[("g", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let got = bertscore(&backend, "g b", "g g").unwrap();
        assert_eq!(got.recall, 1.0);
        assert_eq!(got.precision, 0.5);
        assert!((got.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mixture_follows_closed_form() {
        // Candidate has j matching tokens out of 10; reference is all g.
        // Recall stays 1 and precision is j/10, so f1 = 2(j/10)/(j/10 + 1).
        let backend = table(&[("g", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        for j in 1..=10usize {
            let candidate = ["g"].repeat(j).join(" ") + " " + &["b"].repeat(10 - j).join(" ");
            let candidate = candidate.trim().to_owned();
            let got = bertscore(&backend, &candidate, "g g g").unwrap();
            let p = j as f64 / 10.0;
            let expected = 2.0 * p / (p + 1.0);
            assert!(
                (got.f1 - expected).abs() < 1e-15,
                "j={j}: {} vs {expected}",
                got.f1
            );
        }
    }

    #[test]
    fn self_score_is_exactly_one() {
        let backend = HashedBackend::default();
        for text in ["anemia", "chronic low red cell count", "a b a"] {
            let got = bertscore(&backend, text, text).unwrap();
            assert_eq!(got.precision, 1.0);
            assert_eq!(got.recall, 1.0);
            assert_eq!(got.f1, 1.0);
        }
    }

    #[test]
    fn anti_aligned_tokens_floor_at_zero() {
        let backend = table(&[("g", &[1.0, 0.0]), ("ng", &[-1.0, 0.0])]);
        let got = bertscore(&backend, "ng", "g").unwrap();
        assert_eq!(
            got,
            MetricScore {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0
            }
        );
    }

    #[test]
    fn empty_sides_are_reported() {
        let backend = HashedBackend::default();
        assert!(matches!(
            bertscore(&backend, "...", "fine").unwrap_err(),
            MetricsError::EmptyText {
                side: "candidate",
                ..
            }
        ));
        assert!(matches!(
            bertscore(&backend, "fine", "").unwrap_err(),
            MetricsError::EmptyText {
                side: "reference",
                ..
            }
        ));
    }

    #[test]
    fn order_of_arguments_swaps_precision_and_recall() {
        let backend = table(&[("g", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let ab = bertscore(&backend, "g b", "g g").unwrap();
        let ba = bertscore(&backend, "g g", "g b").unwrap();
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.recall, ba.precision);
        assert_eq!(ab.f1, ba.f1);
    }

    #[test]
    fn top_k_ranks_by_similarity() {
        let backend = table(&[
            ("t", &[1.0, 0.0]),
            ("a", &[1.0, 0.0]),
            ("b", &[0.6, 0.8]),
            ("c", &[0.0, 1.0]),
        ]);
        let got = top_k_ngrams(
            &backend,
            "t",
            "a b c a",
            NgramRange::new(1, 2).unwrap(),
            3,
            SelectionMetric::Cosine,
        )
        .unwrap();
        let surfaces: Vec<&str> = got.iter().map(|s| s.ngram.as_str()).collect();
        assert_eq!(surfaces, ["a", "a b", "c a"]);
        assert_eq!(got[0].similarity, 1.0);
        assert!(got[0].co_prob.is_none());
    }

    #[test]
    fn top_k_tie_break_prefers_longer_then_earlier() {
        let backend = table(&[("x", &[1.0, 0.0])]);
        let got = top_k_ngrams(
            &backend,
            "x",
            "x x x",
            NgramRange::new(1, 2).unwrap(),
            5,
            SelectionMetric::Cosine,
        )
        .unwrap();
        // Duplicates collapse to one unigram and one bigram, both at
        // similarity 1; the bigram wins the tie.
        let shape: Vec<(usize, usize)> = got.iter().map(|s| (s.n, s.start)).collect();
        assert_eq!(shape, [(2, 0), (1, 0)]);
    }

    #[test]
    fn bert_score_metric_ranks_exact_match_first() {
        let backend = table(&[
            ("heart", &[1.0, 0.0, 0.0]),
            ("attack", &[0.0, 1.0, 0.0]),
            ("filler", &[0.0, 0.0, 1.0]),
        ]);
        let got = top_k_ngrams(
            &backend,
            "heart attack",
            "filler heart attack filler",
            NgramRange::new(2, 3).unwrap(),
            1,
            SelectionMetric::BertScore,
        )
        .unwrap();
        assert_eq!(got[0].ngram, "heart attack");
        assert_eq!(got[0].similarity, 1.0);
    }

    #[test]
    fn selection_metric_round_trips_through_strings() {
        for metric in [SelectionMetric::Cosine, SelectionMetric::BertScore] {
            let text = metric.to_string();
            assert_eq!(text.parse::<SelectionMetric>().unwrap(), metric);
        }
        assert!("euclid".parse::<SelectionMetric>().is_err());
    }
}
