use std::io;
use std::path::Path;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A distribution or chain parameter violates its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input value is outside the operation's contract (non-finite
    /// amplitude, empty sequence, out-of-range index, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two containers that must have matching dimensions do not.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// A numeric integration grid does not capture enough probability mass.
    #[error("integration grid too narrow: {0}")]
    IntegrationCoverage(String),

    /// The chain has no unique stationary distribution.
    #[error("stationary distribution is not unique: {0}")]
    AmbiguousStationary(String),

    /// A state with self-transition probability 1 has infinite mean duration.
    #[error("state {0} has self-transition probability 1 (infinite mean duration)")]
    InfiniteDuration(usize),

    /// Every state assigns zero density to some observation; the sequence is
    /// impossible under the model.
    #[error("zero likelihood at t = {t}: no state assigns positive density to the observation")]
    ZeroLikelihood { t: usize },

    /// The linear-domain reference implementation left its usable range.
    #[error("linear-domain oracle out of range: {0}")]
    OracleRange(String),

    /// Threshold placement is undefined because the classes do not separate.
    #[error("degenerate class separation: {0}")]
    DegenerateSeparation(String),

    /// Simulated annealing could not produce a valid candidate.
    #[error("annealing failed: {0}")]
    AnnealingFailed(String),

    /// A record in an input file failed to parse. Rows are 1-based and count
    /// data records, not the header.
    #[error("parse error in {path} at row {row}: {msg}")]
    Parse {
        path: String,
        row: usize,
        msg: String,
    },

    /// The experiment configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// An I/O operation failed; the path is included for context.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
