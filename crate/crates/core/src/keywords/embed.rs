//! Offline embedding backends.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::BackendError;
use crate::index::{analyze_terms, idf, AnalyzerMode};

use super::preprocess_all;

/// Maps text to fixed-dimension vectors.
///
/// Implementations must be deterministic and must never return an all-zero
/// vector for non-empty text.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, BackendError>;

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut v = self.embed_batch(&[text])?;
        v.pop().ok_or_else(|| BackendError::Protocol("empty embedding batch".into()))
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Uniform [-1, 1) components from a ChaCha stream seeded by the term bytes.
pub fn hashed_vector(term: &str, dimension: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(term.as_bytes()));
    (0..dimension).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

const EPSILON: f64 = 1e-6;

fn pad_if_zero(v: &mut [f64]) {
    let norm_sq: f64 = v.iter().map(|x| x * x).sum();
    if norm_sq < 1e-24 {
        if let Some(first) = v.first_mut() {
            *first += EPSILON;
        }
    }
}

fn add_scaled(acc: &mut [f64], v: &[f64], scale: f64) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Hashed random projection: a text embeds as the sum of the hashed vectors
/// of its analyzed tokens. Identifiers written in camel or snake case
/// therefore land near their sub-words (`FlowExecution` is the sum of three
/// vectors, one of which is `flow`'s); an already lowercased compound is a
/// single token.
#[derive(Debug, Clone)]
pub struct HashedBackend {
    dimension: usize,
}

impl HashedBackend {
    pub const DEFAULT_DIMENSION: usize = 16;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashedBackend { dimension }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let terms = analyze_terms(text, AnalyzerMode::Code);
        let mut acc = vec![0.0; self.dimension];
        if terms.is_empty() {
            if !text.is_empty() {
                acc = hashed_vector(text, self.dimension);
            }
        } else {
            for t in &terms {
                add_scaled(&mut acc, &hashed_vector(t, self.dimension), 1.0);
            }
        }
        pad_if_zero(&mut acc);
        acc
    }
}

impl Default for HashedBackend {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

impl EmbeddingBackend for HashedBackend {
    fn name(&self) -> &str {
        "hashed"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Random-indexing embeddings learned from corpus co-occurrence.
///
/// Each term owns a hashed index vector. A term's embedding is its own
/// (unit) index vector plus the unit-normalized, IDF-weighted sum of the
/// index vectors of terms seen within `window` positions of it. Texts embed
/// as the TF-IDF-weighted sum of their term embeddings.
#[derive(Debug, Clone)]
pub struct CooccurrenceBackend {
    dimension: usize,
    doc_count: usize,
    doc_freq: HashMap<String, usize>,
    contexts: HashMap<String, BTreeMap<String, u32>>,
}

impl CooccurrenceBackend {
    pub const DEFAULT_DIMENSION: usize = 128;
    pub const DEFAULT_WINDOW: usize = 4;

    pub fn build<S: AsRef<str>>(texts: &[S], dimension: usize, window: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut contexts: HashMap<String, BTreeMap<String, u32>> = HashMap::new();
        for text in texts {
            let tokens = preprocess_all(text.as_ref(), AnalyzerMode::Code);
            let mut seen: Vec<&String> = tokens.iter().collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *doc_freq.entry(t.clone()).or_insert(0) += 1;
            }
            for (i, t) in tokens.iter().enumerate() {
                let hi = (i + window + 1).min(tokens.len());
                for c in &tokens[i + 1..hi] {
                    if c == t {
                        continue;
                    }
                    *contexts.entry(t.clone()).or_default().entry(c.clone()).or_insert(0) += 1;
                    *contexts.entry(c.clone()).or_default().entry(t.clone()).or_insert(0) += 1;
                }
            }
        }
        CooccurrenceBackend { dimension, doc_count: texts.len(), doc_freq, contexts }
    }

    fn idf(&self, term: &str) -> f64 {
        idf(self.doc_count, self.doc_freq.get(term).copied().unwrap_or(0))
    }

    pub fn term_vector(&self, term: &str) -> Vec<f64> {
        let own = hashed_vector(term, self.dimension);
        let own_norm = norm(&own);
        let mut v: Vec<f64> = own.iter().map(|x| x / own_norm).collect();
        if let Some(ctx) = self.contexts.get(term) {
            let mut acc = vec![0.0; self.dimension];
            for (c, &count) in ctx {
                add_scaled(&mut acc, &hashed_vector(c, self.dimension), count as f64 * self.idf(c));
            }
            let n = norm(&acc);
            if n > 0.0 {
                add_scaled(&mut v, &acc, 1.0 / n);
            }
        }
        v
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let tokens = preprocess_all(text, AnalyzerMode::Code);
        let mut acc = vec![0.0; self.dimension];
        if tokens.is_empty() {
            if !text.is_empty() {
                acc = hashed_vector(text, self.dimension);
            }
        } else {
            let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.as_str()).or_insert(0) += 1;
            }
            for (t, count) in tf {
                add_scaled(&mut acc, &self.term_vector(t), count as f64 * self.idf(t));
            }
        }
        pad_if_zero(&mut acc);
        acc
    }
}

impl EmbeddingBackend for CooccurrenceBackend {
    fn name(&self) -> &str {
        "cooccurrence"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keywords::cosine_similarity;

    #[test]
    fn hashed_is_deterministic_and_nonzero() {
        let b = HashedBackend::default();
        let a = b.embed("flow execution").unwrap();
        assert_eq!(a, b.embed("flow execution").unwrap());
        assert_eq!(a.len(), 16);
        assert!(norm(&b.embed("...").unwrap()) > 0.0);
        assert!(norm(&b.embed("").unwrap()) > 0.0);
    }

    #[test]
    fn hashed_compound_is_sum_of_parts() {
        let b = HashedBackend::default();
        let compound = b.embed("flowExecution").unwrap();
        let mut expected = vec![0.0; 16];
        for t in ["flowexecution", "flow", "execution"] {
            add_scaled(&mut expected, &hashed_vector(t, 16), 1.0);
        }
        for (x, y) in compound.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cooccurrence_relates_neighbours() {
        let texts = [
            "snapshot creation serializes flow execution",
            "snapshot creation compresses flow execution",
            "persistence context provider lookup",
            "persistence context provider cache",
        ];
        let b = CooccurrenceBackend::build(&texts, 64, 4);
        let snap = b.embed("snapshot").unwrap();
        let flow = b.embed("flow").unwrap();
        let cache = b.embed("cache").unwrap();
        let near = cosine_similarity(&snap, &flow).unwrap();
        let far = cosine_similarity(&snap, &cache).unwrap();
        assert!(near > far, "{near} vs {far}");
    }
}
