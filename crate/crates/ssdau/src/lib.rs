//! File formats, embedding backends, the staged pipeline and the `ssdau`
//! command line, on top of [`ssdau_core`].
//!
//! | module | contents |
//! |---|---|
//! | [`io`] | dataset formats, JSON artifacts, augmented records |
//! | [`service`] | HTTP client for the embedding service |
//! | [`cache`] | content-addressed embedding cache |
//! | [`blob`] | binary format for trained scorers |
//! | [`config`] | run configuration |
//! | [`stages`] | one function per pipeline stage |
//! | [`pipeline`] | `augment-all` and its manifest |
//! | [`cli`] | argument parsing and subcommands |

pub mod blob;
pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod service;
pub mod stages;

pub use error::{AppError, AppResult};
pub use ssdau_core as core;
