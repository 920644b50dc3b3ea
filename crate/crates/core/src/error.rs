use thiserror::Error;

/// Errors produced by the bidshade library.
#[derive(Debug, Error)]
pub enum Error {
    /// Fitting or splitting was asked to operate on an empty input.
    #[error("no data to fit")]
    NoData,

    /// A distribution parameter was non-finite or out of its domain.
    #[error("invalid parameters")]
    InvalidParameters,

    /// A configuration value violated its documented invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A replay dataset is missing the competing bid needed to decide wins.
    #[error("cannot adjudicate: {0}")]
    CannotAdjudicate(String),

    /// A CSV or snapshot record violated the file contract.
    #[error("malformed record: {0}")]
    MalformedRecord(String),

    /// A snapshot was written by an incompatible format version.
    #[error("snapshot version mismatch: found {found}, expected {expected}")]
    SnapshotVersion { found: u32, expected: u32 },

    /// A snapshot file could not be decoded at all.
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
