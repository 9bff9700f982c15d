//! Inverted index with Okapi BM25 scoring.

mod analyze;

pub use analyze::{analyze, analyze_terms, split_identifier, AnalyzedToken, AnalyzerMode};

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DocKey, SourceDocument};

pub const INDEX_MAGIC: &[u8; 8] = b"IQLOCIDX";
pub const INDEX_FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index from an empty document set")]
    EmptyCorpus,
    #[error("invalid BM25 parameters: {0}")]
    Params(String),
    #[error("not an index file (bad magic header)")]
    BadMagic,
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u8),
    #[error("index I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("index encoding: {0}")]
    Encoding(#[from] bincode::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, IndexError> {
        let p = Bm25Params { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(IndexError::Params(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(IndexError::Params(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub path: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

impl RankedList {
    pub fn empty(query_id: impl Into<String>) -> Self {
        RankedList { query_id: query_id.into(), hits: Vec::new() }
    }

    pub fn paths(&self) -> Vec<String> {
        self.hits.iter().map(|h| h.path.clone()).collect()
    }

    pub fn rank_of(&self, path: &str) -> Option<usize> {
        self.hits.iter().find(|h| h.path == path).map(|h| h.rank)
    }

    /// Assigns ranks 1.. to `(path, score)` pairs already in final order.
    pub fn from_ordered(query_id: impl Into<String>, scored: Vec<(String, f64)>) -> Self {
        let hits = scored.into_iter().enumerate().map(|(i, (path, score))| Hit { path, score, rank: i + 1 }).collect();
        RankedList { query_id: query_id.into(), hits }
    }
}

/// Immutable BM25 index. Document ordinals are dense in `[0, N)` and follow
/// the order of the input documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    doc_table: Vec<DocKey>,
    scopes: BTreeMap<(String, String), Vec<u32>>,
    params: Bm25Params,
    analyzer: AnalyzerMode,
}

impl Index {
    pub fn build(docs: &[SourceDocument], params: Bm25Params, analyzer: AnalyzerMode) -> Result<Self, IndexError> {
        params.validate()?;
        if docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let per_doc: Vec<(u32, BTreeMap<String, u32>)> = docs
            .par_iter()
            .map(|d| {
                let mut tf = BTreeMap::new();
                let terms = analyze_terms(&d.content, analyzer);
                for t in &terms {
                    *tf.entry(t.clone()).or_insert(0u32) += 1;
                }
                (terms.len() as u32, tf)
            })
            .collect();

        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (ord, (len, tf)) in per_doc.into_iter().enumerate() {
            doc_lengths.push(len);
            for (term, count) in tf {
                postings.entry(term).or_default().push((ord as u32, count));
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;

        let doc_table: Vec<DocKey> = docs.iter().map(SourceDocument::key).collect();
        let mut scopes: BTreeMap<(String, String), Vec<u32>> = BTreeMap::new();
        for (ord, key) in doc_table.iter().enumerate() {
            scopes.entry((key.project.clone(), key.version.clone())).or_default().push(ord as u32);
        }

        Ok(Index { postings, doc_lengths, avg_doc_length, doc_table, scopes, params, analyzer })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, ord: usize) -> usize {
        self.doc_lengths[ord] as usize
    }

    pub fn doc_key(&self, ord: usize) -> &DocKey {
        &self.doc_table[ord]
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn analyzer(&self) -> AnalyzerMode {
        self.analyzer
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_freq(&self, term: &str, ord: usize) -> u32 {
        let Some(list) = self.postings.get(term) else { return 0 };
        match list.binary_search_by_key(&(ord as u32), |&(d, _)| d) {
            Ok(i) => list[i].1,
            Err(_) => 0,
        }
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Ordinals of the documents in a (project, version) scope.
    pub fn scope(&self, project: &str, version: &str) -> &[u32] {
        self.scopes.get(&(project.to_string(), version.to_string())).map_or(&[], Vec::as_slice)
    }

    pub fn ordinal_of(&self, project: &str, version: &str, path: &str) -> Option<usize> {
        self.scope(project, version).iter().map(|&o| o as usize).find(|&o| self.doc_table[o].path == path)
    }

    fn term_weight(&self, idf: f64, tf: u32, ord: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = 1.0 - b + b * self.doc_lengths[ord] as f64 / self.avg_doc_length;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// BM25 score of one document; every entry of `query` contributes.
    pub fn score_bm25<S: AsRef<str>>(&self, query: &[S], ord: usize) -> f64 {
        let n = self.doc_count();
        query
            .iter()
            .map(|t| {
                let t = t.as_ref();
                let tf = self.term_freq(t, ord);
                if tf == 0 {
                    0.0
                } else {
                    self.term_weight(idf(n, self.doc_freq(t)), tf, ord)
                }
            })
            .sum()
    }

    /// Scores the given ordinals term-at-a-time; result is parallel to `ords`.
    pub fn score_many<S: AsRef<str>>(&self, query: &[S], ords: &[u32]) -> Vec<f64> {
        let slot: HashMap<u32, usize> = ords.iter().enumerate().map(|(i, &o)| (o, i)).collect();
        let mut scores = vec![0.0; ords.len()];
        let n = self.doc_count();
        for term in query {
            let list = self.postings(term.as_ref());
            if list.is_empty() {
                continue;
            }
            let w = idf(n, list.len());
            for &(ord, tf) in list {
                if let Some(&i) = slot.get(&ord) {
                    scores[i] += self.term_weight(w, tf, ord as usize);
                }
            }
        }
        scores
    }

    /// Top-`k` documents of a (project, version) scope. Zero scores are
    /// dropped; ties go to the lexicographically smaller path.
    pub fn search<S: AsRef<str>>(
        &self,
        query_id: &str,
        query: &[S],
        project: &str,
        version: &str,
        k: usize,
    ) -> RankedList {
        let scope = self.scope(project, version);
        let scores = self.score_many(query, scope);
        let mut scored: Vec<(String, f64)> = scope
            .iter()
            .zip(scores)
            .filter(|&(_, s)| s > 0.0)
            .map(|(&o, s)| (self.doc_table[o as usize].path.clone(), s))
            .collect();
        sort_hits(&mut scored);
        scored.truncate(k);
        RankedList::from_ordered(query_id, scored)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), IndexError> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&[INDEX_FORMAT_VERSION])?;
        bincode::serialize_into(&mut w, self)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, IndexError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| IndexError::BadMagic)?;
        if &magic != INDEX_MAGIC {
            return Err(IndexError::BadMagic);
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != INDEX_FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion(version[0]));
        }
        Ok(bincode::deserialize_from(r)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Descending score, ascending path.
pub fn sort_hits(scored: &mut [(String, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(path: &str, content: &str) -> SourceDocument {
        SourceDocument::new("P", "1", path, content.to_string()).0
    }

    fn index(contents: &[&str]) -> Index {
        let docs: Vec<_> = contents.iter().enumerate().map(|(i, c)| doc(&format!("d{}", i + 1), c)).collect();
        Index::build(&docs, Bm25Params::default(), AnalyzerMode::Code).unwrap()
    }

    #[test]
    fn build_counts() {
        let idx = index(&["flow flow", "one two three", "x"]);
        assert_eq!(idx.doc_count(), 3);
        assert!((idx.avg_doc_length() - 2.0).abs() < 1e-12);
        assert_eq!(idx.term_freq("flow", 0), 2);
        assert_eq!(idx.postings("flow"), &[(0, 2)]);
    }

    #[test]
    fn empty_docs_rejected() {
        assert!(matches!(Index::build(&[], Bm25Params::default(), AnalyzerMode::Code), Err(IndexError::EmptyCorpus)));
    }

    #[test]
    fn params_validated() {
        assert!(Bm25Params::new(0.0, 0.5).is_err());
        assert!(Bm25Params::new(1.2, 1.5).is_err());
        assert!(Bm25Params::new(1.2, 0.0).is_ok());
    }

    #[test]
    fn absent_term_scores_zero() {
        let idx = index(&["alpha beta", "gamma"]);
        assert_eq!(idx.score_bm25(&["gamma"], 0), 0.0);
    }

    #[test]
    fn motivating_order() {
        let idx = index(&["snapshot creation flow", "flow execution object", "persistence context provider"]);
        let q = ["flow", "snapshot"];
        let s: Vec<f64> = (0..3).map(|d| idx.score_bm25(&q, d)).collect();
        assert!(s[0] > s[1] && s[1] > s[2]);
        assert_eq!(s[2], 0.0);
        let hits = idx.search("q", &q, "P", "1", 100);
        assert_eq!(hits.paths(), ["d1", "d2"]);
        assert_eq!(hits.hits[1].rank, 2);
    }

    #[test]
    fn no_length_normalization_when_b_is_zero() {
        let docs = vec![doc("a", "flow"), doc("b", "flow padding padding padding padding")];
        let idx = Index::build(&docs, Bm25Params::new(1.2, 0.0).unwrap(), AnalyzerMode::Code).unwrap();
        assert_eq!(idx.score_bm25(&["flow"], 0), idx.score_bm25(&["flow"], 1));
    }

    #[test]
    fn ties_break_by_path() {
        let docs = vec![doc("z.java", "flow"), doc("a.java", "flow"), doc("m.java", "other")];
        let idx = Index::build(&docs, Bm25Params::default(), AnalyzerMode::Code).unwrap();
        assert_eq!(idx.search("q", &["flow"], "P", "1", 10).paths(), ["a.java", "z.java"]);
    }

    #[test]
    fn unknown_scope_is_empty() {
        let idx = index(&["flow"]);
        assert!(idx.search("q", &["flow"], "P", "2", 10).hits.is_empty());
    }

    #[test]
    fn serialization_round_trip() {
        let idx = index(&["snapshot creation flow", "flow execution object"]);
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..8], INDEX_MAGIC);
        let back = Index::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, idx);
        assert_eq!(index(&["snapshot creation flow", "flow execution object"]).to_bytes(), bytes);

        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Index::read_from(bad.as_slice()), Err(IndexError::UnsupportedVersion(9))));
        assert!(matches!(Index::read_from(&b"nope"[..]), Err(IndexError::BadMagic)));
    }
}
