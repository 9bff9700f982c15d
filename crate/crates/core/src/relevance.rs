//! Method-level relevance scoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::corpus::{BugReport, MethodSpan};
use crate::index::AnalyzerMode;
use crate::keywords::preprocess;

#[derive(Debug, Error)]
pub enum RelevanceError {
    #[error("invalid relevance input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A (context, candidate) pair as sent to a scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorePair {
    pub context: String,
    pub candidate: String,
}

/// Scores (context, candidate) pairs into `[0, 1]`.
///
/// Implementations must be deterministic and safe to call concurrently, and
/// batch results must equal element-wise results.
pub trait ScorerBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Maximum whitespace-delimited tokens per pair, if limited.
    fn token_budget(&self) -> Option<usize> {
        None
    }

    fn score_batch(&self, pairs: &[ScorePair]) -> Result<Vec<f64>, BackendError>;
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `logistic(4 * (2J - 1))` over the Jaccard similarity `J` of the two token
/// sets. Two empty sets score 0.5.
pub fn lexical_backend_score<S: AsRef<str>>(report_tokens: &[S], method_tokens: &[S]) -> f64 {
    use std::collections::HashSet;
    let a: HashSet<&str> = report_tokens.iter().map(AsRef::as_ref).collect();
    let b: HashSet<&str> = method_tokens.iter().map(AsRef::as_ref).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.5;
    }
    let jaccard = a.intersection(&b).count() as f64 / union as f64;
    logistic(4.0 * (2.0 * jaccard - 1.0))
}

/// Deterministic token-overlap scorer.
#[derive(Debug, Clone, Default)]
pub struct LexicalBackend {
    pub analyzer: AnalyzerMode,
}

impl ScorerBackend for LexicalBackend {
    fn name(&self) -> &str {
        "lexical"
    }

    fn score_batch(&self, pairs: &[ScorePair]) -> Result<Vec<f64>, BackendError> {
        Ok(pairs
            .iter()
            .map(|p| {
                lexical_backend_score(&preprocess(&p.context, self.analyzer), &preprocess(&p.candidate, self.analyzer))
            })
            .collect())
    }
}

/// Byte offset just past the `n`-th whitespace-delimited token.
fn prefix_tokens(text: &str, n: usize) -> &str {
    if n == 0 {
        return "";
    }
    let mut count = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token {
                count += 1;
                if count == n {
                    return &text[..i];
                }
            }
            in_token = false;
        } else {
            in_token = true;
        }
    }
    text
}

/// Fits a pair into `budget` whitespace tokens: the context is kept whole
/// when it fits, and the candidate is cut from its tail.
pub fn truncate_pair(context: &str, candidate: &str, budget: usize) -> ScorePair {
    let context_tokens = context.split_whitespace().count();
    let context = prefix_tokens(context, budget);
    let remaining = budget.saturating_sub(context_tokens);
    ScorePair { context: context.to_string(), candidate: prefix_tokens(candidate, remaining).to_string() }
}

fn make_pair(backend: &dyn ScorerBackend, context: &str, candidate: &str) -> ScorePair {
    match backend.token_budget() {
        Some(budget) => truncate_pair(context, candidate, budget),
        None => ScorePair { context: context.to_string(), candidate: candidate.to_string() },
    }
}

fn check_scores(scores: &[f64], expected: usize) -> Result<(), BackendError> {
    if scores.len() != expected {
        return Err(BackendError::Protocol(format!("expected {expected} scores, got {}", scores.len())));
    }
    match scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        Some(bad) => Err(BackendError::Protocol(format!("score {bad} outside [0, 1]"))),
        None => Ok(()),
    }
}

pub fn score_pair(backend: &dyn ScorerBackend, report: &BugReport, method: &MethodSpan) -> Result<f64, RelevanceError> {
    let context = report.text();
    if context.trim().is_empty() {
        return Err(RelevanceError::InvalidInput(format!("report {} has no text", report.id)));
    }
    if method.body.trim().is_empty() {
        return Err(RelevanceError::InvalidInput(format!("method {} has an empty body", method.name)));
    }
    let scores = backend.score_batch(&[make_pair(backend, &context, &method.body)])?;
    check_scores(&scores, 1)?;
    Ok(scores[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMethod {
    pub path: String,
    pub method: MethodSpan,
    pub score: f64,
}

/// Scores every `(path, method)` against the report in batches of
/// `batch_size`. Batches may run concurrently; output order follows input.
pub fn score_methods(
    backend: &dyn ScorerBackend,
    report: &BugReport,
    methods: &[(String, MethodSpan)],
    batch_size: usize,
) -> Result<Vec<ScoredMethod>, RelevanceError> {
    let context = report.text();
    if context.trim().is_empty() {
        return Err(RelevanceError::InvalidInput(format!("report {} has no text", report.id)));
    }
    let pairs: Vec<ScorePair> = methods.iter().map(|(_, m)| make_pair(backend, &context, &m.body)).collect();
    let batches: Vec<Vec<f64>> = pairs
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let scores = backend.score_batch(chunk)?;
            check_scores(&scores, chunk.len())?;
            Ok(scores)
        })
        .collect::<Result<_, BackendError>>()?;
    Ok(methods
        .iter()
        .zip(batches.into_iter().flatten())
        .map(|((path, method), score)| ScoredMethod { path: path.clone(), method: method.clone(), score })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RelevanceThreshold(f64);

impl RelevanceThreshold {
    pub const DEFAULT: f64 = 0.5;

    pub fn new(value: f64) -> Result<Self, RelevanceError> {
        if (0.0..=1.0).contains(&value) {
            Ok(RelevanceThreshold(value))
        } else {
            Err(RelevanceError::InvalidInput(format!("threshold must be in [0, 1], got {value}")))
        }
    }

    /// Clamps into `[0, 1]`; NaN becomes 1.
    pub fn saturating(value: f64) -> Self {
        RelevanceThreshold(if value.is_nan() { 1.0 } else { value.clamp(0.0, 1.0) })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for RelevanceThreshold {
    fn default() -> Self {
        RelevanceThreshold(Self::DEFAULT)
    }
}

impl TryFrom<f64> for RelevanceThreshold {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        RelevanceThreshold::new(v).map_err(|e| e.to_string())
    }
}

impl From<RelevanceThreshold> for f64 {
    fn from(t: RelevanceThreshold) -> f64 {
        t.0
    }
}

/// Keeps methods scoring at or above the threshold, in input order.
pub fn filter_relevant(scored: &[ScoredMethod], threshold: RelevanceThreshold) -> Vec<ScoredMethod> {
    scored.iter().filter(|m| m.score >= threshold.0).cloned().collect()
}

/// A document is as suspicious as its most suspicious method; 0 without methods.
pub fn aggregate_document_score(methods: &[ScoredMethod]) -> f64 {
    methods.iter().map(|m| m.score).fold(0.0, f64::max)
}
