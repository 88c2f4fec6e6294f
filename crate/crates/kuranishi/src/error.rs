use thiserror::Error;

/// Errors raised while building or transforming atlas data.
///
/// Checks that can fail on valid input (cocycle, tameness, ...) do not use
/// this type; they return a [`crate::report::Verdict`] instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("rank failure: {0}")]
    Rank(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("containment failure: {0}")]
    Containment(String),
    #[error("empty domain: {0}")]
    EmptyDomain(String),
    #[error("chain mismatch: {0}")]
    Chain(String),
    #[error("precompactness failure: {0}")]
    Precompact(String),
    #[error("footprint cover lost: {0}")]
    CoverLost(String),
    #[error("cover consistency failure: {0}")]
    CoverConsistency(String),
    #[error("tame shrinking search exhausted: {0}")]
    Exhausted(String),
    #[error("coverage failure: {0}")]
    Coverage(String),
    #[error("separation failure: {0}")]
    Separation(String),
    #[error("nonpositive bound: {0}")]
    Nonpositive(String),
    #[error("inversion failure: {0}")]
    Inversion(String),
    #[error("incompatible prescriptions: {0}")]
    Incompatible(String),
    #[error("transversality not achieved: {0}")]
    Transversality(String),
    #[error("confinement breach: {0}")]
    Confinement(String),
    #[error("ambiguous gluing: {0}")]
    Ambiguous(String),
    #[error("orientation: {0}")]
    Orientation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("fit residual too large: {0}")]
    Residual(String),
    #[error("sum condition violated: {0}")]
    SumCondition(String),
    #[error("adapted ledger failed: {0}")]
    Ledger(String),
    #[error("boundary too coarse: {0}")]
    Boundary(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
