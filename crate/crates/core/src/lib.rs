//! Sparse-autoencoder debiasing toolkit.
//!
//! Trains a k-sparse autoencoder on text-encoder residual features, derives
//! per-profession gender directions in its latent space, turns them into
//! embedding-space steering deltas, and scores generated images with
//! mismatch-rate and skew fairness metrics.

pub mod cli;
pub mod direction;
pub mod error;
pub mod metrics;
pub mod sae;
pub mod steering;
pub mod storage;
pub mod trainer;

pub use error::{Error, FormatErrorKind, Result};
pub use sae::{EncodeMode, SaeParams, SparseCode};
