use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or configuration value is outside its valid range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data has the wrong shape or length for the operation.
    #[error("input error: {0}")]
    Input(String),

    /// Input is well-formed but degenerate (all-zero frame, empty region, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A frequency shift would alias past the Nyquist limit.
    #[error("frequency offset {offset_hz} Hz aliases at sample rate {sample_rate_hz} Hz")]
    Aliasing { offset_hz: f64, sample_rate_hz: f64 },

    /// A layer was asked for a backward pass without a cached forward pass.
    #[error("state error: {0}")]
    State(String),

    /// A file could not be parsed or decoded.
    #[error("format error: {0}")]
    Format(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// An I/O failure, with the path involved.
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
