//! Content-addressed embedding cache on disk.
//!
//! Each sentence embedding is stored as `<key>.bin`: little-endian `f32`
//! values, the per-token vectors in order followed by the pooled vector. The
//! key is the hex SHA-256 of the dimension, the text and the token offsets.
//! `index.json` maps keys to token counts and is rewritten by [`FileCache::flush`]
//! and on drop.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssdau_core::embedding::{EmbeddingProvider, EmbeddingVector, SentenceEmbedding};
use ssdau_core::text::Token;
use ssdau_core::{Error, Result};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub tokens: usize,
    pub dim: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    entries: BTreeMap<String, IndexEntry>,
}

pub type BoxedProvider = Box<dyn EmbeddingProvider + Send + Sync>;

pub struct FileCache {
    dir: PathBuf,
    dimension: usize,
    inner: Option<BoxedProvider>,
    index: Mutex<Index>,
    dirty: Mutex<bool>,
}

impl std::fmt::Debug for FileCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileCache")
            .field("dir", &self.dir)
            .field("dimension", &self.dimension)
            .field("inner", &self.inner.is_some())
            .finish()
    }
}

fn provider_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Provider(format!("{}: {e}", path.display()))
}

pub fn cache_key(dimension: usize, text: &str, tokens: &[Token]) -> String {
    let mut h = Sha256::new();
    h.update((dimension as u64).to_le_bytes());
    h.update((text.len() as u64).to_le_bytes());
    h.update(text.as_bytes());
    for t in tokens {
        h.update((t.start as u64).to_le_bytes());
        h.update((t.end as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn encode_embedding(e: &SentenceEmbedding) -> Vec<u8> {
    e.per_token
        .iter()
        .chain(Some(&e.pooled))
        .flat_map(|v| v.0.iter().flat_map(|x| x.to_le_bytes()))
        .collect()
}

pub fn decode_embedding(bytes: &[u8], tokens: usize, dim: usize) -> Option<SentenceEmbedding> {
    if bytes.len() != (tokens + 1) * dim * 4 {
        return None;
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut vectors: Vec<EmbeddingVector> = floats.chunks(dim).map(|c| EmbeddingVector(c.to_vec())).collect();
    let pooled = vectors.pop()?;
    Some(SentenceEmbedding {
        per_token: vectors,
        pooled,
    })
}

impl FileCache {
    /// Opens or creates a cache at `dir`. Misses go to `inner`; without one
    /// a miss is a provider error.
    pub fn open(dir: impl Into<PathBuf>, dimension: usize, inner: Option<BoxedProvider>) -> Result<Self> {
        let dir = dir.into();
        if dimension == 0 {
            return Err(Error::Config("provider dimension must be positive".into()));
        }
        if let Some(p) = &inner {
            if p.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: p.dimension(),
                });
            }
        }
        fs::create_dir_all(&dir).map_err(|e| provider_err(&dir, e))?;
        let index_path = dir.join(INDEX_FILE);
        let index = if index_path.exists() {
            let text = fs::read_to_string(&index_path).map_err(|e| provider_err(&index_path, e))?;
            serde_json::from_str(&text).map_err(|e| provider_err(&index_path, e))?
        } else {
            Index::default()
        };
        Ok(Self {
            dir,
            dimension,
            inner,
            index: Mutex::new(index),
            dirty: Mutex::new(false),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.lock().unwrap_or_else(|e| e.into_inner()).entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lookup(&self, key: &str) -> Result<Option<SentenceEmbedding>> {
        let entry = match self.index.lock().unwrap_or_else(|e| e.into_inner()).entries.get(key) {
            Some(e) => *e,
            None => return Ok(None),
        };
        let path = self.dir.join(format!("{key}.bin"));
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(provider_err(&path, e)),
        };
        decode_embedding(&bytes, entry.tokens, entry.dim)
            .map(Some)
            .ok_or_else(|| provider_err(&path, "corrupt cache record"))
    }

    fn store(&self, key: &str, e: &SentenceEmbedding) -> Result<()> {
        let mut index = self.index.lock().unwrap_or_else(|e| e.into_inner());
        if index.entries.contains_key(key) {
            return Ok(());
        }
        let path = self.dir.join(format!("{key}.bin"));
        let tmp = self.dir.join(format!("{key}.bin.tmp"));
        fs::write(&tmp, encode_embedding(e)).map_err(|err| provider_err(&tmp, err))?;
        fs::rename(&tmp, &path).map_err(|err| provider_err(&path, err))?;
        index.entries.insert(
            key.to_string(),
            IndexEntry {
                tokens: e.per_token.len(),
                dim: self.dimension,
            },
        );
        *self.dirty.lock().unwrap_or_else(|e| e.into_inner()) = true;
        Ok(())
    }

    /// Writes `index.json` if anything was added since the last flush.
    pub fn flush(&self) -> Result<()> {
        let index = self.index.lock().unwrap_or_else(|e| e.into_inner());
        let mut dirty = self.dirty.lock().unwrap_or_else(|e| e.into_inner());
        if !*dirty {
            return Ok(());
        }
        let path = self.dir.join(INDEX_FILE);
        let text = serde_json::to_string_pretty(&*index).map_err(|e| provider_err(&path, e))?;
        fs::write(&path, text).map_err(|e| provider_err(&path, e))?;
        *dirty = false;
        Ok(())
    }
}

impl Drop for FileCache {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::warn!("could not write cache index: {e}");
        }
    }
}

impl EmbeddingProvider for FileCache {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_sentence(&self, text: &str, tokens: &[Token]) -> Result<SentenceEmbedding> {
        let key = cache_key(self.dimension, text, tokens);
        if let Some(hit) = self.lookup(&key)? {
            return Ok(hit);
        }
        let inner = self
            .inner
            .as_ref()
            .ok_or_else(|| Error::Provider(format!("cache miss for {text:?} and no backing provider")))?;
        let e = inner.embed_sentence(text, tokens)?;
        self.store(&key, &e)?;
        Ok(e)
    }
}
