//! Fixture paths and brute-force reference implementations shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use iqloc::backend::BackendError;
use iqloc::corpus::{load_bug_reports, load_corpus, BugReport, Corpus};
use iqloc::index::{AnalyzerMode, Bm25Params, Index};
use iqloc::keywords::EmbeddingBackend;
use rand::Rng;

pub const PLANTED_REPORT: &str = "FLOW-101";
pub const PLANTED_DOC: &str = "flowengine/src/org/flow/engine/SnapshotRegistry.java";
/// Rank of the planted document under the plain report query, checked against
/// a separate scoring script before being frozen.
pub const PLANTED_BASELINE_RANK: usize = 6;
pub const PLANTED_BASELINE_SCORE: f64 = 28.414975;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus_manifest() -> PathBuf {
    fixtures().join("corpus/corpus.json")
}

pub fn reports_path() -> PathBuf {
    fixtures().join("reports.jsonl")
}

pub fn fixture_corpus() -> Corpus {
    let manifest = corpus_manifest();
    let (corpus, report) = load_corpus(manifest.parent().unwrap(), &manifest).unwrap();
    assert!(report.issues.is_empty(), "{:?}", report.issues);
    corpus
}

pub fn fixture_reports() -> Vec<BugReport> {
    load_bug_reports(&reports_path()).unwrap()
}

pub fn fixture_index(corpus: &Corpus) -> Index {
    Index::build(corpus.documents(), Bm25Params::default(), AnalyzerMode::Code).unwrap()
}

// ---------------------------------------------------------------------------
// BM25

/// Okapi BM25 evaluated straight from the formula over pre-tokenized
/// documents. `docs` is the whole collection; `scope` selects the ones
/// scored.
pub fn bm25_reference(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    docs.iter()
        .map(|doc| {
            let mut score = 0.0;
            for q in query {
                let tf = doc.iter().filter(|t| *t == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let dl = doc.len() as f64;
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            score
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Keyword selection

/// Embeddings from a fixed table; the document text maps to `doc`.
pub struct TableEmbedder {
    pub table: HashMap<String, Vec<f64>>,
    pub doc: Vec<f64>,
}

impl EmbeddingBackend for TableEmbedder {
    fn name(&self) -> &str {
        "table"
    }

    fn dimension(&self) -> usize {
        self.doc.len()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts.iter().map(|t| self.table.get(*t).cloned().unwrap_or_else(|| self.doc.clone())).collect())
    }
}

fn cos(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    dot / (nu.sqrt() * nv.sqrt())
}

/// Greedy maximal marginal relevance, recomputing every candidate's
/// redundancy against the full selected set at each step.
pub fn mmr_reference(candidates: &[(String, Vec<f64>)], doc: &[f64], n: usize, lambda: f64) -> Vec<String> {
    let mut selected: Vec<usize> = Vec::new();
    while selected.len() < n.min(candidates.len()) {
        let mut best: Option<(f64, &str, usize)> = None;
        for (i, (term, v)) in candidates.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let relevance = cos(v, doc);
            let redundancy = selected
                .iter()
                .map(|&s| cos(v, &candidates[s].1))
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
            let score = lambda * relevance - (1.0 - lambda) * redundancy.unwrap_or(0.0);
            let take = match best {
                None => true,
                Some((bs, bt, _)) => score > bs || (score == bs && term.as_str() < bt),
            };
            if take {
                best = Some((score, term, i));
            }
        }
        selected.push(best.unwrap().2);
    }
    selected.into_iter().map(|i| candidates[i].0.clone()).collect()
}

pub const WORDS: &[&str] = &[
    "anchor", "beacon", "cobalt", "delta", "ember", "falcon", "garnet", "harbor", "indigo", "jasper", "kernel",
    "lantern", "meadow", "nectar", "orbit", "pylon", "quartz", "raven", "summit", "tundra", "umber", "vertex",
    "willow", "xenon", "yonder", "zephyr",
];

pub fn random_unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return v;
        }
    }
}

// ---------------------------------------------------------------------------
// Ranking metrics

pub struct RefRecord {
    pub ranked: Vec<String>,
    pub relevant: BTreeSet<String>,
}

fn is_rel(r: &RefRecord, pos: usize) -> bool {
    r.ranked.get(pos).is_some_and(|p| r.relevant.contains(p))
}

pub fn ap_reference(r: &RefRecord, k: usize) -> f64 {
    let mut total = 0.0;
    for pos in 0..k {
        if is_rel(r, pos) {
            let p_k = (0..=pos).filter(|&i| is_rel(r, i)).count() as f64 / (pos + 1) as f64;
            total += p_k;
        }
    }
    total / r.relevant.len() as f64
}

pub fn rr_reference(r: &RefRecord) -> f64 {
    for pos in 0..r.ranked.len() {
        if is_rel(r, pos) {
            return 1.0 / (pos + 1) as f64;
        }
    }
    0.0
}

pub fn hit_reference(r: &RefRecord, k: usize) -> f64 {
    if (0..k).any(|p| is_rel(r, p)) {
        1.0
    } else {
        0.0
    }
}

pub fn precision_reference(r: &RefRecord, k: usize) -> f64 {
    (0..k).filter(|&p| is_rel(r, p)).count() as f64 / k as f64
}

// ---------------------------------------------------------------------------
// Signed-rank test

/// One-sided p-value `P(R+ <= observed)` by enumerating all `2^n` sign
/// assignments of the (average) ranks of `|baseline - treatment|`.
pub fn wilcoxon_enumerated(baseline: &[f64], treatment: &[f64]) -> (f64, f64) {
    let diffs: Vec<f64> = baseline.iter().zip(treatment).map(|(b, t)| b - t).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    let mut ranks = vec![0.0; n];
    for i in 0..n {
        let a = diffs[i].abs();
        let less = diffs.iter().filter(|d| d.abs() < a).count() as f64;
        let equal = diffs.iter().filter(|d| d.abs() == a).count() as f64;
        ranks[i] = less + (equal + 1.0) / 2.0;
    }
    let observed: f64 = (0..n).filter(|&i| diffs[i] > 0.0).map(|i| ranks[i]).sum();
    let mut at_or_below = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= observed + 1e-9 {
            at_or_below += 1;
        }
    }
    (observed, at_or_below as f64 / (1u64 << n) as f64)
}
