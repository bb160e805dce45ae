//! Correlation and frequency statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 3 paired observations, got {0}")]
    TooFew(usize),
    #[error("the {0} series is constant, correlation is undefined")]
    ConstantSeries(&'static str),
    #[error("the {series} series has a non-finite value at index {index}")]
    NonFinite { series: &'static str, index: usize },
    #[error("co-occurrence probability is undefined: the term occurs in no document")]
    ZeroDenominator,
    #[error("co-occurrence count {co} exceeds term document count {term}")]
    InvalidCounts { co: usize, term: usize },
}

/// Pearson correlation with its two-tailed significance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// A [`Pearson`] result annotated with what was correlated against what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    pub x_label: String,
    pub y_label: String,
}

/// Pearson's r over paired samples, with a two-tailed p-value from the
/// t distribution with n - 2 degrees of freedom.
///
/// Accumulation is single-pass in the streaming (Welford) form: means and
/// centered second moments are updated per pair, which stays accurate when
/// values share many leading digits, as log frequencies do.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew(x.len()));
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite { series: "x", index });
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite { series: "y", index });
    }

    let (mut mean_x, mut mean_y) = (0.0f64, 0.0f64);
    let (mut m2x, mut m2y, mut cxy) = (0.0f64, 0.0f64, 0.0f64);
    let mut n = 0.0f64;
    for (&xi, &yi) in x.iter().zip(y) {
        n += 1.0;
        let dx = xi - mean_x;
        mean_x += dx / n;
        let dy = yi - mean_y;
        mean_y += dy / n;
        // dx is the deviation from the old x mean, the y factor uses the
        // updated mean; this pairing keeps the co-moment exact.
        cxy += dx * (yi - mean_y);
        m2x += dx * (xi - mean_x);
        m2y += dy * (yi - mean_y);
    }

    if m2x == 0.0 {
        return Err(StatsError::ConstantSeries("x"));
    }
    if m2y == 0.0 {
        return Err(StatsError::ConstantSeries("y"));
    }

    let r = (cxy / (m2x * m2y).sqrt()).clamp(-1.0, 1.0);
    let p_value = p_from_r(r, x.len());
    Ok(Pearson {
        r,
        p_value,
        n: x.len(),
    })
}

/// Like [`pearson`], carrying the series labels into the result.
pub fn correlate_labeled(
    x: &[f64],
    y: &[f64],
    x_label: &str,
    y_label: &str,
) -> Result<CorrelationResult, StatsError> {
    let p = pearson(x, y)?;
    Ok(CorrelationResult {
        r: p.r,
        p_value: p.p_value,
        n: p.n,
        x_label: x_label.to_owned(),
        y_label: y_label.to_owned(),
    })
}

fn p_from_r(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        // A perfect fit; the t statistic diverges.
        return 0.0;
    }
    let t = r * (df / denom).sqrt();
    p_value_two_tailed(t, df)
}

/// Two-tailed tail mass of the t distribution at statistic `t`.
pub fn p_value_two_tailed(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1 by construction");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Base-10 logs of the positive entries of `freqs`. Zeros cannot be logged;
/// they are dropped, and `kept_indices` records which inputs survived so
/// callers can drop the paired series' entries symmetrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFreq {
    pub values: Vec<f64>,
    pub kept_indices: Vec<usize>,
    pub dropped_zeros: usize,
}

pub fn log_freq(freqs: &[u64]) -> LogFreq {
    let mut values = Vec::with_capacity(freqs.len());
    let mut kept_indices = Vec::with_capacity(freqs.len());
    let mut dropped_zeros = 0;
    for (index, &f) in freqs.iter().enumerate() {
        if f == 0 {
            dropped_zeros += 1;
        } else {
            values.push((f as f64).log10());
            kept_indices.push(index);
        }
    }
    LogFreq {
        values,
        kept_indices,
        dropped_zeros,
    }
}

/// Probability that a document containing the term also contains the
/// n-gram: co-occurrence count over the term's document count.
pub fn cooccurrence_probability(co_count: usize, term_count: usize) -> Result<f64, StatsError> {
    if term_count == 0 {
        return Err(StatsError::ZeroDenominator);
    }
    if co_count > term_count {
        return Err(StatsError::InvalidCounts {
            co: co_count,
            term: term_count,
        });
    }
    Ok(co_count as f64 / term_count as f64)
}
