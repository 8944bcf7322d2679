use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("pairs belong to different questions: {first:?} and {other:?}")]
    MixedQuestion { first: String, other: String },

    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("non-finite feature value at index {index}")]
    NonFiniteFeature { index: usize },

    #[error("path indices of question {question_id:?} are not a permutation of 0..{n}")]
    BadPathIndex { question_id: String, n: usize },

    #[error("answer confidence must be finite and non-negative, got {0}")]
    BadConfidence(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid layer widths: d={d}, h1={h1}, h2={h2}")]
    InvalidDims { d: usize, h1: usize, h2: usize },

    #[error("forward trace does not match the model shape")]
    StaleTrace,

    #[error("gradient or optimizer state does not match the model shape: expected {expected} parameters, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("representative probabilities sum to {0}, below the clamp floor")]
    DegenerateDistribution(f64),

    #[error("gold labels missing for question {0:?}")]
    MissingLabels(String),

    #[error("answer confidence missing for question {0:?}")]
    MissingConfidence(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("no path scores supplied")]
    EmptyScores,

    #[error("path scores do not cover the instance: {expected} paths, {actual} scores")]
    ScoreCoverage { expected: usize, actual: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("manifest inconsistent with dataset: {0}")]
    InconsistentManifest(String),

    #[error("feature blob is {actual} bytes, expected {expected}")]
    BlobSizeMismatch { expected: u64, actual: u64 },

    #[error("row index {row} out of range for {rows} feature rows")]
    BadRowIndex { row: u64, rows: u64 },

    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),

    #[error("checkpoint shape is corrupt: {0}")]
    ShapeCorruption(String),

    #[error("malformed record in {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable class name, printed by the CLI.
    pub fn class(&self) -> &'static str {
        match self {
            Error::MixedQuestion { .. } => "MixedQuestion",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::NonFiniteFeature { .. } => "NonFiniteFeature",
            Error::BadPathIndex { .. } => "BadPathIndex",
            Error::BadConfidence(_) => "BadConfidence",
            Error::EmptyDataset => "EmptyDataset",
            Error::InvalidDims { .. } => "InvalidDims",
            Error::StaleTrace => "StaleTrace",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::DegenerateDistribution(_) => "DegenerateDistribution",
            Error::MissingLabels(_) => "MissingLabels",
            Error::MissingConfidence(_) => "MissingConfidence",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::EmptyScores => "EmptyScores",
            Error::ScoreCoverage { .. } => "ScoreCoverage",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InconsistentManifest(_) => "InconsistentManifest",
            Error::BlobSizeMismatch { .. } => "BlobSizeMismatch",
            Error::BadRowIndex { .. } => "BadRowIndex",
            Error::VersionUnsupported(_) => "VersionUnsupported",
            Error::ShapeCorruption(_) => "ShapeCorruption",
            Error::Malformed { .. } => "Malformed",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
