//! HTTP client for the model service (`/score`, `/embed`) and its
//! conformance check.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keywords::EmbeddingBackend;
use crate::relevance::{ScorePair, ScorerBackend};

pub const BACKEND_URL_ENV: &str = "IQLOC_BACKEND_URL";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// The service could not be reached or the connection failed.
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    /// The service answered with something that violates the wire protocol.
    #[error("backend protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub pairs: Vec<ScorePair>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RemoteClient {
    base_url: String,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        RemoteClient { base_url: base_url.trim_end_matches('/').to_string(), agent }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        route: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let url = format!("{}{}", self.base_url, route);
        match self.agent.post(&url).send_json(body) {
            Ok(resp) => resp
                .into_json::<Resp>()
                .map_err(|e| BackendError::Protocol(format!("{route}: undecodable response: {e}"))),
            Err(ureq::Error::Status(status, resp)) => {
                Err(BackendError::Status { status, body: resp.into_string().unwrap_or_default() })
            }
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
        }
    }

    pub fn score(&self, pairs: &[ScorePair]) -> Result<Vec<f64>, BackendError> {
        let resp: ScoreResponse = self.post("/score", &ScoreRequest { pairs: pairs.to_vec() })?;
        if resp.scores.len() != pairs.len() {
            return Err(BackendError::Protocol(format!(
                "/score: sent {} pairs, got {} scores",
                pairs.len(),
                resp.scores.len()
            )));
        }
        if let Some(bad) = resp.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(BackendError::Protocol(format!("/score: score {bad} outside [0, 1]")));
        }
        Ok(resp.scores)
    }

    pub fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, BackendError> {
        let req = EmbedRequest { texts: texts.iter().map(|t| t.to_string()).collect() };
        let resp: EmbedResponse = self.post("/embed", &req)?;
        if resp.vectors.len() != texts.len() {
            return Err(BackendError::Protocol(format!(
                "/embed: sent {} texts, got {} vectors",
                texts.len(),
                resp.vectors.len()
            )));
        }
        Ok(resp.vectors)
    }
}

/// Cross-encoder served by the model service.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    client: RemoteClient,
    token_budget: usize,
}

impl RemoteScorer {
    pub const DEFAULT_TOKEN_BUDGET: usize = 512;

    pub fn new(client: RemoteClient, token_budget: usize) -> Self {
        RemoteScorer { client, token_budget }
    }
}

impl ScorerBackend for RemoteScorer {
    fn name(&self) -> &str {
        "remote"
    }

    fn token_budget(&self) -> Option<usize> {
        Some(self.token_budget)
    }

    fn score_batch(&self, pairs: &[ScorePair]) -> Result<Vec<f64>, BackendError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        self.client.score(pairs)
    }
}

/// Embedding model served by the model service. The dimension is probed
/// once at connect time.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: RemoteClient,
    dimension: usize,
}

impl RemoteEmbedder {
    pub fn connect(client: RemoteClient) -> Result<Self, BackendError> {
        let probe = client.embed(&["dimension probe"])?;
        let dimension = probe[0].len();
        if dimension == 0 {
            return Err(BackendError::Protocol("/embed: zero-dimensional vector".into()));
        }
        Ok(RemoteEmbedder { client, dimension })
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    fn name(&self) -> &str {
        "remote"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, BackendError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let vectors = self.client.embed(texts)?;
        if let Some(v) = vectors.iter().find(|v| v.len() != self.dimension) {
            return Err(BackendError::Protocol(format!(
                "/embed: dimension changed from {} to {}",
                self.dimension,
                v.len()
            )));
        }
        Ok(vectors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub url: String,
    pub checks: Vec<CheckOutcome>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn record(&mut self, name: &str, result: Result<String, String>) {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(CheckOutcome { name: name.to_string(), passed, detail });
    }
}

/// Exercises both endpoints: response ordering and length, score range,
/// embedding dimension constancy and determinism of repeated requests.
/// Transport failures are returned as errors; protocol violations are
/// recorded as failed checks.
pub fn check_conformance(client: &RemoteClient) -> Result<ConformanceReport, BackendError> {
    let mut report = ConformanceReport { url: client.base_url().to_string(), ..Default::default() };
    let texts = [
        "NullPointerException when saving a snapshot",
        "public void save() { snapshot.write(); }",
        "NullPointerException when saving a snapshot",
    ];

    let first = match client.embed(&texts) {
        Ok(v) => Some(v),
        Err(BackendError::Transport(t)) => return Err(BackendError::Transport(t)),
        Err(e) => {
            report.record("embed.response", Err(e.to_string()));
            None
        }
    };
    if let Some(vectors) = first {
        report.record("embed.response", Ok(format!("{} vectors", vectors.len())));
        let dim = vectors[0].len();
        report.record(
            "embed.dimension",
            if dim > 0 && vectors.iter().all(|v| v.len() == dim) {
                Ok(format!("dimension {dim}"))
            } else {
                Err(format!("dimensions {:?}", vectors.iter().map(Vec::len).collect::<Vec<_>>()))
            },
        );
        report.record(
            "embed.values",
            if vectors.iter().all(|v| v.iter().all(|x| x.is_finite()) && v.iter().any(|x| *x != 0.0)) {
                Ok("finite, non-zero".into())
            } else {
                Err("non-finite or all-zero vector".into())
            },
        );
        let again = client.embed(&texts[..1]);
        report.record(
            "embed.determinism",
            match again {
                Ok(v) if v[0] == vectors[0] && vectors[0] == vectors[2] => Ok("identical for identical text".into()),
                Ok(_) => Err("repeated text embedded differently".into()),
                Err(e) => Err(e.to_string()),
            },
        );
        let single = client.embed(&texts[1..2]);
        report.record(
            "embed.ordering",
            match single {
                Ok(v) if v[0] == vectors[1] => Ok("batch order preserved".into()),
                Ok(_) => Err("batch element differs from single request".into()),
                Err(e) => Err(e.to_string()),
            },
        );
    }

    let pairs = vec![
        ScorePair { context: texts[0].to_string(), candidate: texts[1].to_string() },
        ScorePair { context: texts[0].to_string(), candidate: "int add(int a, int b) { return a + b; }".to_string() },
    ];
    match client.score(&pairs) {
        Ok(scores) => {
            report.record("score.response", Ok(format!("{} scores in [0, 1]", scores.len())));
            let again = client.score(&pairs);
            report.record(
                "score.determinism",
                match again {
                    Ok(s) if s == scores => Ok("identical for identical request".into()),
                    Ok(_) => Err("repeated request scored differently".into()),
                    Err(e) => Err(e.to_string()),
                },
            );
            let reversed: Vec<ScorePair> = pairs.iter().rev().cloned().collect();
            report.record(
                "score.ordering",
                match client.score(&reversed) {
                    Ok(s) if s[0] == scores[1] && s[1] == scores[0] => {
                        Ok("response order follows request order".into())
                    }
                    Ok(_) => Err("scores do not follow request order".into()),
                    Err(e) => Err(e.to_string()),
                },
            );
        }
        Err(BackendError::Transport(t)) => return Err(BackendError::Transport(t)),
        Err(e) => report.record("score.response", Err(e.to_string())),
    }
    Ok(report)
}
