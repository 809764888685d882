//! Embedding provider abstraction.
//!
//! Providers return one vector per corpus token plus a pooled sentence
//! vector. Pooling everywhere in the crate is the arithmetic mean, computed
//! in `f64` and stored as `f32`.
//!
//! [`HashEmbedder`] is the deterministic, context-free test provider: a
//! token's vector is the unit-normalized vector of `d` standard normals drawn
//! from a ChaCha8 stream seeded with the first eight bytes (little endian) of
//! `SHA-256(surface)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Sentence;
use crate::discretize::TextBlock;
use crate::error::{Error, Result};
use crate::seed;
use crate::text::{self, Token};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f32>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&x| x as f64).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEmbedding {
    pub per_token: Vec<EmbeddingVector>,
    pub pooled: EmbeddingVector,
}

pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;

    /// Embeds `text` with one vector per entry of `tokens`.
    fn embed_sentence(&self, text: &str, tokens: &[Token]) -> Result<SentenceEmbedding>;

    fn embed_text(&self, text: &str) -> Result<SentenceEmbedding> {
        self.embed_sentence(text, &text::tokenize(text))
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed_sentence(&self, text: &str, tokens: &[Token]) -> Result<SentenceEmbedding> {
        (**self).embed_sentence(text, tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Service,
    FileCache,
    DeterministicTest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl ProviderConfig {
    pub fn deterministic(dimension: usize) -> Self {
        Self {
            kind: ProviderKind::DeterministicTest,
            dimension,
            endpoint: None,
            path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("provider dimension must be positive".into()));
        }
        match self.kind {
            ProviderKind::Service if self.endpoint.as_deref().unwrap_or("").is_empty() => {
                Err(Error::Config("service provider requires an endpoint".into()))
            }
            ProviderKind::FileCache if self.path.as_deref().unwrap_or("").is_empty() => {
                Err(Error::Config("file cache provider requires a path".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Mean of `vectors`; `None` when empty.
pub fn mean_pool(vectors: &[EmbeddingVector]) -> Option<EmbeddingVector> {
    let first = vectors.first()?;
    let mut acc = alloc::vec![0.0f64; first.dim()];
    for v in vectors {
        for (a, &x) in acc.iter_mut().zip(&v.0) {
            *a += x as f64;
        }
    }
    let n = vectors.len() as f64;
    Some(EmbeddingVector(acc.into_iter().map(|a| (a / n) as f32).collect()))
}

/// Cosine similarity in `[-1, 1]`. Equal vectors give exactly 1, two zero
/// vectors count as identical, one zero vector as orthogonal.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a == b {
        return 1.0;
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.0.iter().zip(&b.0) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (libm::sqrt(na) * libm::sqrt(nb))).clamp(-1.0, 1.0),
    }
}

/// Cosine mapped to `[0, 1]` by `(x + 1) / 2`.
pub fn rescaled_cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    (cosine(a, b) + 1.0) / 2.0
}

/// Mean of the sentence's token vectors over `cut`.
pub fn pool_span(embedding: &SentenceEmbedding, cut: (usize, usize), block_id: &str) -> Result<EmbeddingVector> {
    if cut.0 >= cut.1 {
        return Err(Error::EmptySpan { block: block_id.into() });
    }
    let slice = embedding
        .per_token
        .get(cut.0..cut.1)
        .ok_or_else(|| Error::Shape(format!("cut {}..{} past {} token vectors", cut.0, cut.1, embedding.per_token.len())))?;
    Ok(mean_pool(slice).expect("non-empty span"))
}

/// Contextual span vector: the block's tokens embedded in their full sentence.
pub fn embed_span<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    sentence: &Sentence,
    block: &TextBlock,
) -> Result<EmbeddingVector> {
    if block.is_empty() {
        return Err(Error::EmptySpan { block: block.id.clone() });
    }
    let emb = provider.embed_sentence(&sentence.text, &sentence.tokens)?;
    pool_span(&emb, block.cut, &block.id)
}

/// Checks a provider response against the configured dimension and token count.
pub fn check_embedding(emb: &SentenceEmbedding, dimension: usize, tokens: usize) -> Result<()> {
    if emb.per_token.len() != tokens {
        return Err(Error::Provider(format!(
            "expected {tokens} token vectors, got {}",
            emb.per_token.len()
        )));
    }
    for v in emb.per_token.iter().chain(core::iter::once(&emb.pooled)) {
        if v.dim() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: v.dim(),
            });
        }
        if !v.is_finite() {
            return Err(Error::Provider("non-finite embedding value".into()));
        }
    }
    Ok(())
}

/// Deterministic context-free provider; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension }
    }

    pub fn token_vector(&self, surface: &str) -> EmbeddingVector {
        let digest = Sha256::digest(surface.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        let mut rng = seed::rng(u64::from_le_bytes(bytes));
        let raw: Vec<f64> = (0..self.dimension).map(|_| seed::standard_normal(&mut rng)).collect();
        let norm = libm::sqrt(raw.iter().map(|x| x * x).sum::<f64>());
        EmbeddingVector(raw.into_iter().map(|x| (x / norm) as f32).collect())
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_sentence(&self, _text: &str, tokens: &[Token]) -> Result<SentenceEmbedding> {
        let per_token: Vec<EmbeddingVector> = tokens.iter().map(|t| self.token_vector(&t.surface)).collect();
        let pooled = mean_pool(&per_token).unwrap_or_else(|| EmbeddingVector(alloc::vec![0.0; self.dimension]));
        Ok(SentenceEmbedding { per_token, pooled })
    }
}
