use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates an operation's preconditions.
    #[error("input error: {0}")]
    Input(String),

    /// Argument outside the function's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dempster-Shafer fusion is undefined when the two opinions fully conflict.
    #[error("total conflict between opinions (conflict mass {0})")]
    TotalConflict(f64),

    /// A dogmatic opinion (zero uncertainty) has no finite Dirichlet strength.
    #[error("degenerate opinion: uncertainty {0} cannot be mapped to Dirichlet parameters")]
    DegenerateOpinion(f64),

    /// Sinkhorn iteration hit its cap without meeting the marginal tolerance.
    #[error("transport did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    /// Malformed input file.
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    /// A value that should be finite came out NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("query {index}: {source}")]
    AtQuery {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("video {index}: {source}")]
    AtVideo {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Config,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::NotConverged { .. }
            | Error::TotalConflict(_)
            | Error::DegenerateOpinion(_)
            | Error::NonFinite(_) => {
                ErrorKind::Numerical
            }
            Error::AtQuery { source, .. } | Error::AtVideo { source, .. } => source.kind(),
            Error::Input(_) | Error::Domain(_) | Error::Parse { .. } | Error::Io { .. } => {
                ErrorKind::Input
            }
        }
    }

    /// Process exit code: 1 input, 2 numerical failure, 3 configuration.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Input => 1,
            ErrorKind::Numerical => 2,
            ErrorKind::Config => 3,
        }
    }

    pub(crate) fn at_query(self, index: usize) -> Self {
        Error::AtQuery {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_video(self, index: usize) -> Self {
        Error::AtVideo {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
