use std::path::PathBuf;

/// Errors produced by the metric library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },

    #[error("payload truncated: expected {expected} bytes after header, found {found}")]
    PayloadTruncated { expected: u64, found: u64 },

    #[error("trailing bytes after payload at byte {offset}")]
    TrailingBytes { offset: u64 },

    #[error("csv error at line {line}: {reason}")]
    Csv { line: u64, reason: String },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("negative weight {value} at row {row}")]
    NegativeWeight { row: usize, value: f64 },

    #[error("weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sample size mismatch: {left} vs {right} (uniform path requires equal sizes)")]
    SizeMismatch { left: usize, right: usize },

    #[error("insufficient rows: requested {requested}, available {available}")]
    InsufficientRows { requested: usize, available: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires an unweighted embedding set")]
    WeightedInput,

    #[error("covariance requires at least 2 unweighted samples, got {n}")]
    TooFewSamples { n: usize },

    #[error("degenerate bandwidth: all pooled points are identical")]
    DegenerateBandwidth,

    #[error("covariance has zero trace")]
    ZeroTrace,

    #[error("split correction requires an even sample count, got {n}")]
    OddSplit { n: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("non-finite intermediate in {0}")]
    NonFiniteIntermediate(&'static str),

    #[error("metric {metric} failed: {source}")]
    Metric {
        metric: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wraps an error with the name of the metric that produced it.
    pub fn in_metric(self, metric: &str) -> Self {
        match self {
            e @ Error::Metric { .. } => e,
            e => Error::Metric { metric: metric.to_string(), source: Box::new(e) },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
