//! Microblog retrieval with word- and character-level embeddings.
//!
//! The crate covers the full pipeline for retrieving resource-need and
//! resource-availability posts from a tweet corpus:
//!
//! - [`corpus`]: ingestion, normalization, and Jaccard near-duplicate removal;
//! - [`vocab`]: word/character vocabularies and the Huffman coding used by
//!   hierarchical softmax;
//! - [`optim`]: parameter tensors, SGD/Adam, and a finite-difference gradient
//!   checker;
//! - [`models`]: five skip-gram embedding models (word-only, word+char mean,
//!   word+char attention, word+char biLSTM+attention, and independently
//!   trained word/char tables) sharing one training and inference interface;
//! - [`retrieval`]: cosine ranking and embedding-based query expansion;
//! - [`baselines`]: pattern-file matching and Dirichlet query-likelihood
//!   retrieval with Rocchio expansion;
//! - [`eval`]: P@100, R@1000, F-score and MAP against TREC-style qrels;
//! - [`persist`]: checksummed binary model files and warm-start transfer
//!   between corpora.
//!
//! All training is deterministic under a fixed seed when run single-threaded.
//! Read-only batch work (scoring, matching, dedup candidate checks) is
//! data-parallel via rayon when the `parallel` feature is enabled (default);
//! disabling it yields a dependency-free sequential build with identical
//! outputs.

pub mod baselines;
pub mod corpus;
pub mod eval;
pub mod exec;
pub mod models;
pub mod optim;
pub mod persist;
pub mod retrieval;
pub mod stem;
pub mod stopwords;
pub mod vocab;

use std::path::PathBuf;

/// Failure class, used by callers (the CLI) to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or arguments.
    Usage,
    /// Malformed or inconsistent input data.
    Data,
    /// Non-finite values or other numeric breakdown.
    Numeric,
}

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed line {line} in {path}: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocabulary too small: {size} entries (need at least 2)")]
    VocabTooSmall { size: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("unembeddable token: {0}")]
    UnembeddableToken(String),
    #[error("no query term is embeddable for query '{0}'")]
    QueryNotEmbeddable(String),
    #[error("invalid pattern at line {line} of {path}: {reason}")]
    InvalidPattern {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("corrupt model file {path}: {reason}")]
    CorruptModel { path: PathBuf, reason: String },
    #[error("unsupported model file version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("model kind mismatch: file holds {found}, requested {requested}")]
    KindMismatch { found: String, requested: String },
    #[error("duplicate document id {0} in ranked list")]
    DuplicateRankedId(String),
}

impl Error {
    /// Coarse classification for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::VocabTooSmall { .. } => ErrorClass::Usage,
            Error::NonFinite { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
