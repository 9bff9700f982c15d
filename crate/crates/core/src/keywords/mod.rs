//! MMR keyword extraction.
//!
//! Candidates are the distinct preprocessed tokens of a text. Each round
//! scores every remaining candidate by
//! `lambda * sim(token, text) - (1 - lambda) * max_sim(token, selected)`
//! and selects the best one, so later picks trade relevance against
//! redundancy with what is already chosen.

mod embed;

pub use embed::{fnv1a, hashed_vector, CooccurrenceBackend, EmbeddingBackend, HashedBackend};

use std::collections::HashSet;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::index::{analyze_terms, AnalyzerMode};
use crate::relevance::ScoredMethod;

pub const STOPWORDS_TXT: &str = include_str!("../../data/stopwords.txt");

static STOPWORDS: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| STOPWORDS_TXT.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect());

pub fn is_stopword(term: &str) -> bool {
    STOPWORDS.contains(term)
}

#[derive(Debug, Error)]
pub enum KeywordError {
    #[error("invalid keyword request: {0}")]
    InvalidRequest(String),
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn is_number(term: &str) -> bool {
    term.chars().all(|c| c.is_numeric())
}

/// Analyzed tokens minus stop words and pure numbers, duplicates kept.
pub fn preprocess_all(doc: &str, mode: AnalyzerMode) -> Vec<String> {
    analyze_terms(doc, mode).into_iter().filter(|t| !is_stopword(t) && !is_number(t)).collect()
}

/// Distinct candidate terms in first-occurrence order.
pub fn preprocess(doc: &str, mode: AnalyzerMode) -> Vec<String> {
    let mut seen = HashSet::new();
    preprocess_all(doc, mode).into_iter().filter(|t| seen.insert(t.clone())).collect()
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, KeywordError> {
    if u.len() != v.len() {
        return Err(KeywordError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(KeywordError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRequest {
    pub doc: String,
    pub n: usize,
    pub lambda: f64,
    #[serde(default)]
    pub analyzer: AnalyzerMode,
}

impl KeywordRequest {
    pub const DEFAULT_N: usize = 15;
    pub const DEFAULT_LAMBDA: f64 = 0.5;

    pub fn new(doc: impl Into<String>, n: usize, lambda: f64) -> Result<Self, KeywordError> {
        let req = KeywordRequest { doc: doc.into(), n, lambda, analyzer: AnalyzerMode::Code };
        req.validate()?;
        Ok(req)
    }

    pub fn with_defaults(doc: impl Into<String>) -> Self {
        KeywordRequest {
            doc: doc.into(),
            n: Self::DEFAULT_N,
            lambda: Self::DEFAULT_LAMBDA,
            analyzer: AnalyzerMode::Code,
        }
    }

    pub fn validate(&self) -> Result<(), KeywordError> {
        if self.n == 0 {
            return Err(KeywordError::InvalidRequest("n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(KeywordError::InvalidRequest(format!("lambda must be in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// One selection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub term: String,
    /// 1-based selection round.
    pub round: usize,
    pub s_d: f64,
    pub s_k: f64,
    pub mmr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub keywords: Vec<Keyword>,
}

impl KeywordSet {
    pub fn terms(&self) -> Vec<&str> {
        self.keywords.iter().map(|k| k.term.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }
}

/// Preprocesses `req.doc`, embeds the candidates and the whole document, and
/// selects up to `req.n` keywords with [`select_mmr`].
pub fn extract_keywords(req: &KeywordRequest, backend: &dyn EmbeddingBackend) -> Result<KeywordSet, KeywordError> {
    req.validate()?;
    let candidates = preprocess(&req.doc, req.analyzer);
    if candidates.is_empty() {
        return Ok(KeywordSet::default());
    }
    let refs: Vec<&str> = candidates.iter().map(String::as_str).collect();
    let embeddings = backend.embed_batch(&refs)?;
    if embeddings.len() != candidates.len() {
        return Err(BackendError::Protocol(format!(
            "expected {} embeddings, got {}",
            candidates.len(),
            embeddings.len()
        ))
        .into());
    }
    let doc_vec = backend.embed(&req.doc)?;
    select_mmr(&candidates, &embeddings, &doc_vec, req.n, req.lambda)
}

/// Greedy MMR selection over pre-embedded candidates.
///
/// Each round picks the candidate maximizing
/// `lambda * cos(c, doc) - (1 - lambda) * max_{k selected} cos(c, k)`, with the
/// redundancy term 0 before the first pick. Ties go to the lexicographically
/// smallest term.
pub fn select_mmr(
    candidates: &[String],
    embeddings: &[Vec<f64>],
    doc_vec: &[f64],
    n: usize,
    lambda: f64,
) -> Result<KeywordSet, KeywordError> {
    if candidates.len() != embeddings.len() {
        return Err(KeywordError::InvalidRequest(format!(
            "{} candidates but {} embeddings",
            candidates.len(),
            embeddings.len()
        )));
    }
    let s_d: Vec<f64> = embeddings.iter().map(|e| cosine_similarity(e, doc_vec)).collect::<Result<_, _>>()?;
    // Running max over selected keywords; 0 until something is selected.
    let mut s_k = vec![0.0f64; candidates.len()];
    let mut remaining: Vec<usize> = (0..candidates.len()).collect();
    let mut selected = Vec::new();

    while selected.len() < n && !remaining.is_empty() {
        let mut best: Option<(usize, usize, f64)> = None; // (slot in remaining, candidate, mmr)
        for (slot, &c) in remaining.iter().enumerate() {
            let mmr = lambda * s_d[c] - (1.0 - lambda) * s_k[c];
            let better = match best {
                None => true,
                Some((_, b, bm)) => mmr > bm || (mmr == bm && candidates[c] < candidates[b]),
            };
            if better {
                best = Some((slot, c, mmr));
            }
        }
        let (slot, pick, mmr) = best.expect("remaining is non-empty");
        selected.push(Keyword {
            term: candidates[pick].clone(),
            round: selected.len() + 1,
            s_d: s_d[pick],
            s_k: s_k[pick],
            mmr,
        });
        remaining.remove(slot);
        for &c in &remaining {
            let sim = cosine_similarity(&embeddings[c], &embeddings[pick])?;
            s_k[c] = if selected.len() == 1 { sim } else { s_k[c].max(sim) };
        }
    }
    Ok(KeywordSet { keywords: selected })
}

/// Concatenates relevant method bodies in (path, start line) order and runs
/// [`extract_keywords`] on the result.
pub fn keywords_from_code(
    relevant: &[ScoredMethod],
    n: usize,
    lambda: f64,
    analyzer: AnalyzerMode,
    backend: &dyn EmbeddingBackend,
) -> Result<KeywordSet, KeywordError> {
    if relevant.is_empty() {
        return Ok(KeywordSet::default());
    }
    let mut ordered: Vec<&ScoredMethod> = relevant.iter().collect();
    ordered.sort_by(|a, b| (&a.path, a.method.start_line).cmp(&(&b.path, b.method.start_line)));
    let doc = ordered.iter().map(|m| m.method.body.as_str()).collect::<Vec<_>>().join("\n");
    let req = KeywordRequest { doc, n, lambda, analyzer };
    extract_keywords(&req, backend)
}
