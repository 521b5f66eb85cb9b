use thiserror::Error;

/// Errors surfaced by the library.
///
/// Nonpositive intensity components are not errors: likelihood evaluations
/// return `f64::NEG_INFINITY` for them so samplers can reject the move.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate locations {i} and {j} (separation {separation:e} below {threshold:e})")]
    DuplicatePoints {
        i: usize,
        j: usize,
        separation: f64,
        threshold: f64,
    },

    #[error(
        "covariance is ill-conditioned: Cholesky failed with jitter up to {max_jitter:e}, \
         smallest eigenvalue estimate {min_eigenvalue:e}"
    )]
    IllConditioned {
        max_jitter: f64,
        min_eigenvalue: f64,
    },

    #[error("gradient undefined: component {index} is not strictly positive ({value})")]
    GradientUndefined { index: usize, value: f64 },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("hyperparameter estimation failed: {0}")]
    Estimation(String),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Dimension { .. } => "dimension",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DuplicatePoints { .. } => "duplicate_points",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::GradientUndefined { .. } => "gradient_undefined",
            Error::Initialization(_) => "initialization",
            Error::Estimation(_) => "estimation",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
