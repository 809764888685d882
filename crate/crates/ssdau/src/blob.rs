//! Versioned binary format for trained pair scorers.
//!
//! Layout: the 8-byte magic `SSDAUPS1`, a little-endian `u32` header length,
//! a JSON header, then every parameter as a little-endian `f64` in
//! [`PairScorer::parameters`] order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use ssdau_core::filtering::scorer::{InitKind, PairScorer};

use crate::error::{AppError, AppResult};

pub const MAGIC: &[u8; 8] = b"SSDAUPS1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobHeader {
    pub version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub relations: Vec<String>,
    pub dropout_rate: f64,
    pub init: InitKind,
    pub seed: u64,
    pub parameter_count: usize,
}

fn invalid(reason: impl Into<String>) -> AppError {
    AppError::Validation(format!("scorer blob: {}", reason.into()))
}

pub fn encode(scorer: &PairScorer, relations: &[String]) -> AppResult<Vec<u8>> {
    if relations.len() != scorer.relations() {
        return Err(invalid(format!(
            "{} relation names for {} scorer outputs",
            relations.len(),
            scorer.relations()
        )));
    }
    let header = BlobHeader {
        version: VERSION,
        input_dim: scorer.input_dim(),
        hidden_dim: scorer.hidden_dim(),
        relations: relations.to_vec(),
        dropout_rate: scorer.dropout_rate,
        init: scorer.init,
        seed: scorer.seed,
        parameter_count: scorer.parameter_count(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| invalid(e.to_string()))?;
    let params = scorer.parameters();
    let mut out = Vec::with_capacity(12 + json.len() + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> AppResult<(BlobHeader, PairScorer)> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(invalid("bad magic"));
    }
    let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let body = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| invalid("truncated header"))?;
    let header: BlobHeader = serde_json::from_slice(body).map_err(|e| invalid(e.to_string()))?;
    if header.version != VERSION {
        return Err(invalid(format!("unsupported version {}", header.version)));
    }
    let rest = &bytes[12 + header_len..];
    if rest.len() != header.parameter_count * 8 {
        return Err(invalid(format!(
            "{} parameter bytes for {} parameters",
            rest.len(),
            header.parameter_count
        )));
    }
    let params: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut scorer = PairScorer::zeros(header.input_dim, header.hidden_dim, header.relations.len());
    scorer.set_parameters(&params)?;
    scorer.dropout_rate = header.dropout_rate;
    scorer.init = header.init;
    scorer.seed = header.seed;
    scorer.validate()?;
    Ok((header, scorer))
}

pub fn save(path: &Path, scorer: &PairScorer, relations: &[String]) -> AppResult<()> {
    let bytes = encode(scorer, relations)?;
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> AppResult<(BlobHeader, PairScorer)> {
    decode(&std::fs::read(path).map_err(|e| AppError::io(path, e))?)
}
