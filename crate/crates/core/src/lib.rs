//! Sparse k-mer coding of protein sequences with Lasso feature selection.
//!
//! The crate turns labeled amino-acid sequences (typically TCR CDR3 regions)
//! into fixed-length sparse vectors, optionally appends label-keyed
//! domain-knowledge properties, selects features with one-vs-rest Lasso and
//! evaluates a handful of lightweight multiclass classifiers.
//!
//! Module map:
//!
//! - [`seqio`]: CSV/FASTA ingestion, dataset statistics, synthetic data
//! - [`kmers`]: contiguous and spaced k-mers, mixed-radix indexing
//! - [`sparse`]: CSR matrices, triplet export
//! - [`embedding`]: per-sequence encoders and domain-knowledge vectors
//! - [`lasso`]: coordinate-descent Lasso and feature selection
//! - [`classify`]: stratified splits and KNN / Gaussian NB / softmax LR / CART
//! - [`metrics`]: confusion matrices, weighted/macro scores, OvR ROC AUC
//! - [`projection`]: exact t-SNE and SVG scatter plots
//! - [`pipeline`]: end-to-end runs and report assembly

pub mod classify;
pub mod embedding;
pub mod error;
pub mod kmers;
pub mod lasso;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod seqio;
pub mod sparse;

pub use error::{Error, ErrorKind, Result};

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`, truncated to 16 hex characters.
pub(crate) fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}
