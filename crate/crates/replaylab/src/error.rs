//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by buffers, networks, environments, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("invalid discount {0}; gamma must lie in (0, 1]")]
    InvalidDiscount(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("undefined similarity: all-zero vector")]
    UndefinedSimilarity,
    #[error("rank must be finite, got {0}")]
    NonFiniteRank(f64),
    #[error("no experiences to sample")]
    NoExperiences,
    #[error("batch split {from_fifo}+{from_episodic} does not equal total {total}")]
    BadBatchSplit {
        total: usize,
        from_fifo: usize,
        from_episodic: usize,
    },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("bad network architecture: {0}")]
    BadArchitecture(String),
    #[error("action {action} out of range for {actions} actions")]
    BadAction { action: usize, actions: usize },
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("unknown task id {0}")]
    UnknownTask(usize),
    #[error("not an IDX file: bad magic {0:#010x}")]
    BadIdxMagic(u32),
    #[error("unexpected end of data")]
    UnexpectedEof,
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("csv schema mismatch: {0}")]
    CsvSchema(String),
    #[error("no data rows")]
    NoDataRows,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
