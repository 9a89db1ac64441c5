use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: bad magic bytes", .0.display())]
    BadMagic(PathBuf),

    #[error("{}: unsupported format version {version}", .path.display())]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{}: unexpected end of file", .0.display())]
    UnexpectedEof(PathBuf),

    #[error("{}: {extra} trailing bytes after payload", .path.display())]
    TrailingBytes { path: PathBuf, extra: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFiniteValue(String),

    #[error("{}: {message}", .path.display())]
    MetaParseError { path: PathBuf, message: String },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("empty input")]
    EmptyInput,

    #[error("label out of range: {label} not in [0, {k})")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("labels absent")]
    LabelsAbsent,

    #[error("degenerate denominator: {m} samples for {k} classes")]
    DegenerateDenominator { m: usize, k: usize },

    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("symmetric eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("median pairwise distance is zero; pass an explicit bandwidth")]
    ZeroBandwidth,

    #[error("invalid k={k} for {m} samples")]
    InvalidK { k: usize, m: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("metric `{0}` needs a reference bundle")]
    MissingReference(String),

    #[error("bundle `{0}` has neither true_error nor labels")]
    MissingTruth(String),

    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("bundle `{name}`: {source}")]
    Bundle {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_bundle(self, name: &str) -> Error {
        Error::Bundle {
            name: name.to_string(),
            source: Box::new(self),
        }
    }
}
