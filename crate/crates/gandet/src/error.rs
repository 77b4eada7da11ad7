use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation contract (shape mismatch, bad argument range, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Numerically degenerate input (e.g. normalizing a near-zero vector).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Input image smaller than the network's receptive-field floor.
    #[error("input too small: {height}x{width}, network minimum is {minimum}x{minimum}")]
    InputTooSmall {
        height: usize,
        width: usize,
        minimum: usize,
    },

    /// A gradient went NaN/Inf during an optimizer step.
    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    /// A metric that needs both classes was asked of a single-class score set.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Manifest loading problems; always names the offending record or path.
    #[error("manifest error: {0}")]
    Manifest(String),

    /// Checkpoint file problems.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Run configuration problems.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
