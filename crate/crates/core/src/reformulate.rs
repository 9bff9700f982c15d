//! Query reformulation from report and code keywords.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keywords::{cosine_similarity, EmbeddingBackend, KeywordError, KeywordSet};

#[derive(Debug, Error)]
pub enum ReformulateError {
    #[error("bug report produced no keyword candidates")]
    EmptyReportKeywords,
    #[error("invalid reformulation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Keyword(#[from] KeywordError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Report,
    Code,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTerm {
    pub term: String,
    pub provenance: Provenance,
    /// Best cosine similarity to a report term, for `code` terms.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReformulateParams {
    pub tau: f64,
    pub max_len: usize,
    pub cap_factor: f64,
}

impl Default for ReformulateParams {
    fn default() -> Self {
        ReformulateParams { tau: 0.5, max_len: 15, cap_factor: 1.5 }
    }
}

impl ReformulateParams {
    pub fn validate(&self) -> Result<(), ReformulateError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ReformulateError::InvalidParams(format!("tau must be in [0, 1], got {}", self.tau)));
        }
        if self.max_len == 0 {
            return Err(ReformulateError::InvalidParams("max_len must be at least 1".into()));
        }
        if !(self.cap_factor >= 1.0 && self.cap_factor.is_finite()) {
            return Err(ReformulateError::InvalidParams(format!("cap_factor must be >= 1, got {}", self.cap_factor)));
        }
        Ok(())
    }

    /// Upper bound on the query length, `ceil(cap_factor * max_len)`.
    pub fn cap(&self) -> usize {
        (self.cap_factor * self.max_len as f64 - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReformulatedQuery {
    pub terms: Vec<QueryTerm>,
    pub tau: f64,
    pub max_len: usize,
}

impl ReformulatedQuery {
    pub fn term_strings(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.term.clone()).collect()
    }

    /// Space-separated `term[tag]` rendering.
    pub fn explain(&self) -> String {
        self.terms
            .iter()
            .map(|t| {
                let tag = match t.provenance {
                    Provenance::Report => "report",
                    Provenance::Code => "code",
                    Provenance::Both => "both",
                };
                match t.similarity {
                    Some(s) => format!("{}[{tag} {s:.3}]", t.term),
                    None => format!("{}[{tag}]", t.term),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Fuses report keywords with code keywords.
///
/// The report keywords (in selection order, truncated to `max_len`) form
/// the base. Code keywords equal to a base term re-tag it `both`. Other code
/// keywords whose best cosine similarity to a base term reaches `tau` are
/// appended by descending similarity until the query holds `cap()` terms.
pub fn reformulate_query(
    report_kw: &KeywordSet,
    code_kw: &KeywordSet,
    backend: &dyn EmbeddingBackend,
    params: &ReformulateParams,
) -> Result<ReformulatedQuery, ReformulateError> {
    params.validate()?;
    if report_kw.is_empty() {
        return Err(ReformulateError::EmptyReportKeywords);
    }

    let mut terms: Vec<QueryTerm> = Vec::new();
    let mut seen = HashSet::new();
    for kw in &report_kw.keywords {
        if terms.len() == params.max_len {
            break;
        }
        if seen.insert(kw.term.clone()) {
            terms.push(QueryTerm { term: kw.term.clone(), provenance: Provenance::Report, similarity: None });
        }
    }

    let mut extra: Vec<(&str, usize)> = Vec::new(); // (term, selection index)
    for (i, kw) in code_kw.keywords.iter().enumerate() {
        if let Some(t) = terms.iter_mut().find(|t| t.term == kw.term) {
            t.provenance = Provenance::Both;
        } else if !extra.iter().any(|(e, _)| *e == kw.term) {
            extra.push((kw.term.as_str(), i));
        }
    }

    let cap = params.cap();
    if !extra.is_empty() && terms.len() < cap {
        let base: Vec<&str> = terms.iter().map(|t| t.term.as_str()).collect();
        let mut texts: Vec<&str> = base.clone();
        texts.extend(extra.iter().map(|(t, _)| *t));
        let vectors = backend.embed_batch(&texts).map_err(KeywordError::from)?;
        let (base_vecs, extra_vecs) = vectors.split_at(base.len());

        let mut candidates: Vec<(f64, usize, &str)> = Vec::new();
        for ((term, order), v) in extra.iter().zip(extra_vecs) {
            let mut best = f64::NEG_INFINITY;
            for b in base_vecs {
                best = best.max(cosine_similarity(v, b)?);
            }
            if best >= params.tau {
                candidates.push((best, *order, term));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (sim, _, term) in candidates {
            if terms.len() >= cap {
                break;
            }
            if seen.insert(term.to_string()) {
                terms.push(QueryTerm { term: term.to_string(), provenance: Provenance::Code, similarity: Some(sim) });
            }
        }
    }

    Ok(ReformulatedQuery { terms, tau: params.tau, max_len: params.max_len })
}
