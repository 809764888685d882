//! HTTP client for the embedding service.
//!
//! `POST {endpoint}/embed` with `{texts, tokens}` where `tokens[i]` lists the
//! `[start, end)` code-point offsets of each token of `texts[i]`. The reply is
//! `{dim, vectors, pooled?}`: one vector per token per text, plus an optional
//! sentence vector per text. When `pooled` is absent the client mean-pools.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ssdau_core::embedding::{mean_pool, EmbeddingProvider, EmbeddingVector, SentenceEmbedding};
use ssdau_core::text::{byte_to_char, Token};
use ssdau_core::{Error, Result};

pub const ENDPOINT_ENV: &str = "SSDAU_EMBED_ENDPOINT";
/// Largest batch the service accepts.
pub const MAX_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub dimension: usize,
    pub timeout_ms: u64,
    /// Attempts after the first one.
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub batch_size: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080".into(),
            dimension: 768,
            timeout_ms: 30_000,
            retries: 3,
            backoff_ms: 100,
            max_in_flight: 4,
            batch_size: MAX_BATCH,
        }
    }
}

impl ServiceConfig {
    pub fn new(endpoint: impl Into<String>, dimension: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            dimension,
            ..Self::default()
        }
    }

    /// Replaces the endpoint with `$SSDAU_EMBED_ENDPOINT` when set.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(e) = std::env::var(ENDPOINT_ENV) {
            if !e.trim().is_empty() {
                self.endpoint = e;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.endpoint.trim().is_empty() {
            return Err(Error::Config("service provider requires an endpoint".into()));
        }
        if self.dimension == 0 {
            return Err(Error::Config("provider dimension must be positive".into()));
        }
        if self.max_in_flight == 0 || self.batch_size == 0 || self.batch_size > MAX_BATCH {
            return Err(Error::Config(format!(
                "max_in_flight must be positive and batch_size in 1..={MAX_BATCH}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
    tokens: Vec<Vec<[usize; 2]>>,
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<Vec<f32>>>,
    #[serde(default)]
    pooled: Option<Vec<Vec<f32>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    #[serde(default)]
    pub model_name: String,
    pub dim: usize,
}

/// Counting gate bounding concurrent requests.
struct Gate {
    busy: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        while *busy >= self.limit {
            busy = self.freed.wait(busy).unwrap_or_else(|e| e.into_inner());
        }
        *busy += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut busy = self.0.busy.lock().unwrap_or_else(|e| e.into_inner());
        *busy -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Retryable(String),
    Fatal(Error),
}

pub struct ServiceProvider {
    config: ServiceConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl std::fmt::Debug for ServiceProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceProvider").field("config", &self.config).finish()
    }
}

impl ServiceProvider {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate {
            busy: Mutex::new(0),
            freed: Condvar::new(),
            limit: config.max_in_flight,
        };
        Ok(Self { config, agent, gate })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.endpoint.trim_end_matches('/'))
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> std::result::Result<T, Failure>) -> Result<T> {
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(6));
                thread::sleep(Duration::from_millis(wait));
            }
            let _permit = self.gate.acquire();
            match call() {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(reason)) => {
                    log::debug!("embedding request attempt {} failed: {reason}", attempt + 1);
                    last = reason;
                }
            }
        }
        Err(Error::Transport { attempts, reason: last })
    }

    pub fn health(&self) -> Result<Health> {
        let url = self.url("/health");
        self.with_retries(|| {
            let mut resp = self.agent.get(&url).call().map_err(transport)?;
            check_status(resp.status().as_u16())?;
            resp.body_mut()
                .read_json::<Health>()
                .map_err(|e| Failure::Fatal(Error::Provider(format!("bad /health body: {e}"))))
        })
    }

    /// Embeds many sentences, batched to the service limit.
    pub fn embed_batch(&self, items: &[(&str, &[Token])]) -> Result<Vec<SentenceEmbedding>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(self.config.batch_size) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }

    fn embed_chunk(&self, items: &[(&str, &[Token])]) -> Result<Vec<SentenceEmbedding>> {
        let request = EmbedRequest {
            texts: items.iter().map(|(t, _)| *t).collect(),
            tokens: items
                .iter()
                .map(|(text, tokens)| {
                    tokens
                        .iter()
                        .map(|t| [byte_to_char(text, t.start), byte_to_char(text, t.end)])
                        .collect()
                })
                .collect(),
        };
        let url = self.url("/embed");
        let response: EmbedResponse = self.with_retries(|| {
            let mut resp = self.agent.post(&url).send_json(&request).map_err(transport)?;
            check_status(resp.status().as_u16())?;
            resp.body_mut()
                .read_json::<EmbedResponse>()
                .map_err(|e| Failure::Fatal(Error::Provider(format!("bad /embed body: {e}"))))
        })?;
        self.unpack(items, response)
    }

    fn unpack(&self, items: &[(&str, &[Token])], response: EmbedResponse) -> Result<Vec<SentenceEmbedding>> {
        let dim = self.config.dimension;
        if response.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: response.dim,
            });
        }
        if response.vectors.len() != items.len() {
            return Err(Error::Provider(format!(
                "service returned {} vector lists for {} texts",
                response.vectors.len(),
                items.len()
            )));
        }
        let pooled = match response.pooled {
            Some(p) if p.len() != items.len() => {
                return Err(Error::Provider(format!("service returned {} pooled vectors for {} texts", p.len(), items.len())))
            }
            Some(p) => p.into_iter().map(Some).collect(),
            None => vec![None; items.len()],
        };
        let mut out = Vec::with_capacity(items.len());
        for (((_, tokens), vectors), pooled) in items.iter().zip(response.vectors).zip(pooled) {
            if vectors.len() != tokens.len() {
                return Err(Error::Provider(format!(
                    "service returned {} token vectors for {} tokens",
                    vectors.len(),
                    tokens.len()
                )));
            }
            let per_token: Vec<EmbeddingVector> = vectors.into_iter().map(EmbeddingVector).collect();
            let pooled = match pooled {
                Some(p) => EmbeddingVector(p),
                None => mean_pool(&per_token).unwrap_or_else(|| EmbeddingVector(vec![0.0; dim])),
            };
            for v in per_token.iter().chain(Some(&pooled)) {
                if v.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: v.dim(),
                    });
                }
                if !v.is_finite() {
                    return Err(Error::Provider("service returned a non-finite vector".into()));
                }
            }
            out.push(SentenceEmbedding { per_token, pooled });
        }
        Ok(out)
    }
}

fn transport(e: ureq::Error) -> Failure {
    match e {
        ureq::Error::BadUri(_) | ureq::Error::Http(_) | ureq::Error::InvalidProxyUrl => {
            Failure::Fatal(Error::Provider(e.to_string()))
        }
        other => Failure::Retryable(other.to_string()),
    }
}

fn check_status(status: u16) -> std::result::Result<(), Failure> {
    match status {
        200..=299 => Ok(()),
        500..=599 => Err(Failure::Retryable(format!("HTTP {status}"))),
        _ => Err(Failure::Fatal(Error::Provider(format!("service answered HTTP {status}")))),
    }
}

impl EmbeddingProvider for ServiceProvider {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed_sentence(&self, text: &str, tokens: &[Token]) -> Result<SentenceEmbedding> {
        let mut batch = self.embed_chunk(&[(text, tokens)])?;
        Ok(batch.pop().expect("one embedding per text"))
    }
}
