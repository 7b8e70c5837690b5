//! Backoff n-gram language modeling: counting and Good-Turing estimation,
//! ARPA text I/O, relative-entropy pruning with a weighted log-difference
//! baseline, and perplexity evaluation.
//!
//! Probabilities live in natural log space throughout; the ARPA boundary
//! converts to and from log10. Models are immutable once built and safe to
//! share across threads; estimation and pruning produce new models.

pub mod arpa;
pub mod counts;
pub mod discount;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod model;
pub mod prune;
pub mod testing;
pub mod vocab;

pub use error::{Error, Result};
pub use model::{BackoffModel, BackoffMass, ModelBuilder, NgramEntry, ValidationReport};
pub use vocab::{NgramKey, Vocabulary, WordId};
