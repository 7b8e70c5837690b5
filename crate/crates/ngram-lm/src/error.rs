use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("word id {0} is outside the vocabulary")]
    WordIdOutOfRange(u32),

    #[error("zero probability: no unigram for \"{word}\" and no <unk> in the model")]
    ZeroProbability { word: String },

    #[error("zero probability for \"{word}\" at line {line}, token {index}")]
    ZeroProbabilityAt {
        word: String,
        line: usize,
        index: usize,
    },

    #[error("backoff degenerate for history \"{history}\": denominator {denominator} <= 0")]
    BackoffDegenerate { history: String, denominator: f64 },

    #[error("negative backoff mass: numerator {0} <= 0")]
    NegativeBackoffMass(f64),

    #[error("history \"{0}\" is not an entry of the model")]
    HistoryNotFound(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model failed validation: {0}")]
    InvalidModel(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("line {line} exceeds the token limit ({limit} tokens)")]
    LineTooLong { line: usize, limit: usize },

    #[error("reserved token \"{token}\" in corpus at line {line}")]
    ReservedToken { token: String, line: usize },

    #[error("good-turing cutoff must be >= 1, got {0}")]
    InvalidCutoff(u64),

    #[error("n-gram \"{0}\" not present in the count table")]
    MissingCount(String),

    #[error("enumeration would visit {cells} (h,w) cells, over the limit of {limit}")]
    EnumerationLimit { cells: u128, limit: u64 },

    #[error("{0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
