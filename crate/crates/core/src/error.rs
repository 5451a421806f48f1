use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Each variant maps onto one of the process exit codes used by the CLI
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        field: Option<String>,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("kernel matrix is ill-conditioned: Cholesky failed with jitter up to {max_jitter:.3e}")]
    IllConditioned { max_jitter: f64 },

    #[error("hyperparameter optimization failed: all {evaluations} likelihood evaluations were ill-conditioned")]
    OptimizationFailed {
        evaluations: usize,
        best_so_far: Option<Vec<f64>>,
    },

    #[error("forward-dynamics estimation failed: {message} (raw inertia eigenvalues {eigenvalues:?})")]
    EstimationFailed {
        message: String,
        eigenvalues: Vec<f64>,
    },

    #[error("training set of {got} samples exceeds the exact-GP cap of {cap}")]
    TooLarge { got: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// 0 success, 1 runtime failure, 2 configuration/contract error,
    /// 3 unsupported-model request.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension { .. }
            | Error::InvalidModel(_)
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::TooLarge { .. }
            | Error::Toml(_) => 2,
            Error::Unsupported(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
