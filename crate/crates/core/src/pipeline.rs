//! End-to-end localization: retrieve, score methods, extract keywords,
//! reformulate, rerank.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, RemoteClient, RemoteEmbedder, RemoteScorer};
use crate::corpus::{BugReport, Corpus, MethodSpan};
use crate::index::{analyze_terms, sort_hits, AnalyzerMode, Bm25Params, Index, RankedList};
use crate::keywords::{
    extract_keywords, is_stopword, keywords_from_code, CooccurrenceBackend, EmbeddingBackend, HashedBackend, Keyword,
    KeywordError, KeywordRequest,
};
use crate::reformulate::{reformulate_query, ReformulateError, ReformulateParams, ReformulatedQuery};
use crate::relevance::{
    filter_relevant, score_methods, LexicalBackend, RelevanceError, RelevanceThreshold, ScorerBackend,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("reading config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
    #[error(transparent)]
    Keyword(#[from] KeywordError),
    #[error(transparent)]
    Reformulate(#[from] ReformulateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl PipelineError {
    /// True when the failure came from the model service.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            PipelineError::Backend(_)
                | PipelineError::Relevance(RelevanceError::Backend(_))
                | PipelineError::Keyword(KeywordError::Backend(_))
                | PipelineError::Reformulate(ReformulateError::Keyword(KeywordError::Backend(_)))
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Lexical,
    Remote,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hashed,
    #[default]
    Cooccurrence,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub top_k_initial: usize,
    pub analyzer: AnalyzerMode,
    pub k1: f64,
    pub b: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let p = Bm25Params::default();
        RetrievalConfig { top_k_initial: 100, analyzer: AnalyzerMode::Code, k1: p.k1, b: p.b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelevanceConfig {
    pub threshold: RelevanceThreshold,
    pub backend: ScorerKind,
    pub batch_size: usize,
    pub token_budget: usize,
}

impl Default for RelevanceConfig {
    fn default() -> Self {
        RelevanceConfig {
            threshold: RelevanceThreshold::default(),
            backend: ScorerKind::Lexical,
            batch_size: 32,
            token_budget: RemoteScorer::DEFAULT_TOKEN_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeywordConfig {
    pub n: usize,
    pub lambda: f64,
    pub backend: EmbedderKind,
    /// Dimension of the offline embedding backends.
    pub dimension: usize,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        KeywordConfig {
            n: KeywordRequest::DEFAULT_N,
            lambda: KeywordRequest::DEFAULT_LAMBDA,
            backend: EmbedderKind::Cooccurrence,
            dimension: CooccurrenceBackend::DEFAULT_DIMENSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig { url: "http://localhost:8901".into(), timeout_ms: 30_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub retrieval: RetrievalConfig,
    pub relevance: RelevanceConfig,
    pub keywords: KeywordConfig,
    pub reformulate: ReformulateParams,
    pub remote: RemoteConfig,
    /// Corpus manifest, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_manifest: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.retrieval.top_k_initial == 0 {
            return Err(PipelineError::Config("retrieval.top_k_initial must be at least 1".into()));
        }
        Bm25Params::new(self.retrieval.k1, self.retrieval.b).map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.relevance.batch_size == 0 {
            return Err(PipelineError::Config("relevance.batch_size must be at least 1".into()));
        }
        if self.keywords.dimension == 0 {
            return Err(PipelineError::Config("keywords.dimension must be at least 1".into()));
        }
        KeywordRequest {
            doc: String::new(),
            n: self.keywords.n,
            lambda: self.keywords.lambda,
            analyzer: AnalyzerMode::Code,
        }
        .validate()?;
        self.reformulate.validate()?;
        Ok(())
    }

    pub fn bm25(&self) -> Bm25Params {
        Bm25Params { k1: self.retrieval.k1, b: self.retrieval.b }
    }

    /// Reads a JSON config; missing keys take their defaults. A relative
    /// `corpus_manifest` is resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let err = |message: String| PipelineError::ConfigFile { path: path.to_path_buf(), message };
        let raw = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&raw).map_err(|e| err(e.to_string()))?;
        if let (Some(m), Some(dir)) = (&cfg.corpus_manifest, path.parent()) {
            if m.is_relative() {
                cfg.corpus_manifest = Some(dir.join(m));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The scorer and embedder a run uses.
pub struct Backends {
    pub scorer: Box<dyn ScorerBackend>,
    pub embedder: Box<dyn EmbeddingBackend>,
}

impl Backends {
    /// Lexical scorer and hashed embeddings.
    pub fn offline(dimension: usize) -> Self {
        Backends { scorer: Box::new(LexicalBackend::default()), embedder: Box::new(HashedBackend::new(dimension)) }
    }

    /// Builds the configured backends. The co-occurrence embedder is trained
    /// on the corpus documents; remote backends use `url_override` when set.
    pub fn from_config(
        cfg: &PipelineConfig,
        corpus: &Corpus,
        url_override: Option<&str>,
    ) -> Result<Self, PipelineError> {
        let url = url_override.unwrap_or(&cfg.remote.url);
        let client = || RemoteClient::new(url, Duration::from_millis(cfg.remote.timeout_ms));
        let scorer: Box<dyn ScorerBackend> = match cfg.relevance.backend {
            ScorerKind::Lexical => Box::new(LexicalBackend { analyzer: cfg.retrieval.analyzer }),
            ScorerKind::Remote => Box::new(RemoteScorer::new(client(), cfg.relevance.token_budget)),
        };
        let embedder: Box<dyn EmbeddingBackend> = match cfg.keywords.backend {
            EmbedderKind::Hashed => Box::new(HashedBackend::new(cfg.keywords.dimension)),
            EmbedderKind::Cooccurrence => {
                let texts: Vec<&str> = corpus.documents().iter().map(|d| d.content.as_str()).collect();
                Box::new(CooccurrenceBackend::build(
                    &texts,
                    cfg.keywords.dimension,
                    CooccurrenceBackend::DEFAULT_WINDOW,
                ))
            }
            EmbedderKind::Remote => Box::new(RemoteEmbedder::connect(client())?),
        };
        Ok(Backends { scorer, embedder })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub path: String,
    pub method: String,
    pub start_line: usize,
    pub end_line: usize,
    pub score: f64,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub retrieve: f64,
    pub score: f64,
    pub keywords: f64,
    pub reformulate: f64,
    pub rerank: f64,
    pub total: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub report_id: String,
    pub initial: RankedList,
    pub method_scores: Vec<MethodScore>,
    pub report_keywords: Vec<Keyword>,
    pub code_keywords: Vec<Keyword>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<ReformulatedQuery>,
    #[serde(rename = "final")]
    pub final_ranking: RankedList,
    pub timings_ms: StageTimings,
}

/// Report text analyzed with stop words removed; repeated terms are kept.
pub fn initial_query(report: &BugReport, analyzer: AnalyzerMode) -> Vec<String> {
    analyze_terms(&report.text(), analyzer).into_iter().filter(|t| !is_stopword(t)).collect()
}

/// Reorders `initial` by BM25 against `query`. Documents the new query does
/// not match keep their initial relative order, after all matched ones.
pub fn rerank(index: &Index, report: &BugReport, initial: &RankedList, query: &[String]) -> RankedList {
    let ords: Vec<u32> = initial
        .hits
        .iter()
        .filter_map(|h| index.ordinal_of(&report.project, &report.version, &h.path).map(|o| o as u32))
        .collect();
    let scores = index.score_many(query, &ords);
    let mut matched: Vec<(String, f64)> = Vec::new();
    let mut unmatched: Vec<(String, f64)> = Vec::new();
    for (&ord, score) in ords.iter().zip(scores) {
        let path = index.doc_key(ord as usize).path.clone();
        if score > 0.0 {
            matched.push((path, score));
        } else {
            unmatched.push((path, 0.0));
        }
    }
    sort_hits(&mut matched);
    matched.extend(unmatched);
    RankedList::from_ordered(initial.query_id.clone(), matched)
}

/// Localizes one report. With `baseline` set only the initial retrieval runs
/// and the final ranking equals it.
pub fn localize(
    report: &BugReport,
    index: &Index,
    corpus: &Corpus,
    config: &PipelineConfig,
    backends: &Backends,
    baseline: bool,
) -> Result<LocalizationResult, PipelineError> {
    let started = Instant::now();
    let mut timings = StageTimings::default();
    let analyzer = index.analyzer();

    let t = Instant::now();
    let query = initial_query(report, analyzer);
    let initial = index.search(&report.id, &query, &report.project, &report.version, config.retrieval.top_k_initial);
    timings.retrieve = ms(t.elapsed());

    let mut result = LocalizationResult {
        report_id: report.id.clone(),
        initial: initial.clone(),
        method_scores: Vec::new(),
        report_keywords: Vec::new(),
        code_keywords: Vec::new(),
        query: None,
        final_ranking: initial,
        timings_ms: StageTimings::default(),
    };
    if baseline || result.initial.hits.is_empty() {
        timings.total = ms(started.elapsed());
        result.timings_ms = timings;
        return Ok(result);
    }

    let t = Instant::now();
    let mut methods: Vec<(String, MethodSpan)> = Vec::new();
    for hit in &result.initial.hits {
        match corpus.get(&report.project, &report.version, &hit.path) {
            Some(doc) => methods.extend(doc.methods.iter().map(|m| (doc.path.clone(), m.clone()))),
            None => warn!("{}: retrieved {} is not in the corpus", report.id, hit.path),
        }
    }
    let scored = score_methods(backends.scorer.as_ref(), report, &methods, config.relevance.batch_size)?;
    let relevant = filter_relevant(&scored, config.relevance.threshold);
    result.method_scores = scored
        .iter()
        .map(|s| MethodScore {
            path: s.path.clone(),
            method: s.method.name.clone(),
            start_line: s.method.start_line,
            end_line: s.method.end_line,
            score: s.score,
        })
        .collect();
    timings.score = ms(t.elapsed());

    let t = Instant::now();
    let kw = &config.keywords;
    let report_req = KeywordRequest { doc: report.text(), n: kw.n, lambda: kw.lambda, analyzer };
    let report_kw = extract_keywords(&report_req, backends.embedder.as_ref())?;
    let code_kw = keywords_from_code(&relevant, kw.n, kw.lambda, analyzer, backends.embedder.as_ref())?;
    timings.keywords = ms(t.elapsed());

    if report_kw.is_empty() {
        warn!("{}: report yields no keyword candidates; keeping the initial ranking", report.id);
    } else {
        let t = Instant::now();
        let reformulated = reformulate_query(&report_kw, &code_kw, backends.embedder.as_ref(), &config.reformulate)?;
        timings.reformulate = ms(t.elapsed());

        let t = Instant::now();
        result.final_ranking = rerank(index, report, &result.initial, &reformulated.term_strings());
        timings.rerank = ms(t.elapsed());
        result.query = Some(reformulated);
    }
    result.report_keywords = report_kw.keywords;
    result.code_keywords = code_kw.keywords;
    timings.total = ms(started.elapsed());
    result.timings_ms = timings;
    Ok(result)
}

/// Localizes reports concurrently; results keep the input order. `threads`
/// caps the worker count (default: all cores).
pub fn localize_all(
    reports: &[BugReport],
    index: &Index,
    corpus: &Corpus,
    config: &PipelineConfig,
    backends: &Backends,
    baseline: bool,
    threads: Option<usize>,
) -> Result<Vec<Result<LocalizationResult, PipelineError>>, PipelineError> {
    let run = || reports.par_iter().map(|r| localize(r, index, corpus, config, backends, baseline)).collect::<Vec<_>>();
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            Ok(pool.install(run))
        }
        None => Ok(run()),
    }
}
