//! Structure-preserving data augmentation for triple-annotated
//! information-extraction corpora.
//!
//! The crate is `no_std` + `alloc`. It holds the algorithmic pipeline:
//!
//! - [`corpus`]: sentences, entity mentions, triples, the sparse
//!   head/relation/tail tag tensor and perturbation injection.
//! - [`discretize`]: splitting sentences into head/relation/tail text blocks
//!   and grouping them under shared semantic constraints.
//! - [`embedding`]: the embedding provider abstraction and a deterministic
//!   hash-based provider.
//! - [`matching`]: component similarities, the hybrid score and per-group
//!   candidate queues.
//! - [`augment`]: structure-consistent replacement and syntactic coherence.
//! - [`filtering`]: the pair scorer, the triple-level consistency loss and
//!   topic filtering.
//! - [`evaluate`]: triple-set metrics, threshold sweeps and breakdowns.
//!
//! IO, HTTP-backed embedding, persistence and the command-line driver live in
//! the `ssdau` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod augment;
pub mod corpus;
pub mod discretize;
pub mod embedding;
pub mod error;
pub mod evaluate;
pub mod filtering;
pub mod linalg;
pub mod matching;
pub mod pos;
pub mod seed;
pub mod text;

pub use error::{Error, Result};
