use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("document `{doc_id}`: {sentences} sentences but {labels} labels")]
    LengthMismatch {
        doc_id: String,
        sentences: usize,
        labels: usize,
    },

    #[error("document `{0}` has no sentences")]
    EmptyDocument(String),

    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),

    #[error("unknown role `{0}`")]
    UnknownRole(String),

    #[error("invalid role inventory: {0}")]
    InvalidInventory(String),

    #[error("span error in document `{doc_id}`: {message}")]
    Span { doc_id: String, message: String },

    #[error("cannot split {documents} documents into {parts} non-empty parts")]
    TooFewDocuments { documents: usize, parts: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("document `{doc_id}`: zero-probability transition {from} -> {to}, difficulty is infinite")]
    InfiniteDifficulty {
        doc_id: String,
        from: String,
        to: String,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("target distribution for sentence {index} sums to {sum}")]
    InvalidTarget { index: usize, sum: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(
        "the confusion-based role curriculum needs a confusion matrix from a random-order run; \
         train with `--strategy baseline` first, export it with `culr confusion --split val`, \
         then pass it with `--confusion <path>`"
    )]
    MissingConfusion,

    #[error("the embedding-based role curriculum needs role embeddings; pass `--embeddings <path>`")]
    MissingEmbeddings,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure came from numerics rather than input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
