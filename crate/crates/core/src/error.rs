use thiserror::Error;

/// Errors produced by every module in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{what} = {value} is outside the valid range {range}")]
    OutOfRange {
        what: &'static str,
        value: String,
        range: String,
    },

    #[error("operation requires the {expected} regime, parameters are {found}")]
    WrongRegime { expected: String, found: String },

    #[error(
        "quadrature did not converge: best estimate ln|I| = {best_log_value:.6e} \
         (sign {best_sign}), ln(error) = {log_error:.6e} after {nodes} nodes"
    )]
    QuadratureFailure {
        best_log_value: f64,
        best_sign: f64,
        log_error: f64,
        nodes: usize,
    },

    #[error("{count} of {total} paths were censored; refusing to use a biased sample")]
    Censored { count: usize, total: usize },

    #[error("singular linear system at row {row}")]
    SingularSystem { row: usize },

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    /// Stable machine-readable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::OutOfRange { .. } => "out_of_range",
            Error::WrongRegime { .. } => "wrong_regime",
            Error::QuadratureFailure { .. } => "quadrature_failure",
            Error::Censored { .. } => "censored",
            Error::SingularSystem { .. } => "singular_system",
            Error::Unsupported(_) => "unsupported",
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureFailure { .. } | Error::Censored { .. } | Error::SingularSystem { .. }
        )
    }

    pub fn out_of_range(what: &'static str, value: impl ToString, range: impl ToString) -> Self {
        Error::OutOfRange {
            what,
            value: value.to_string(),
            range: range.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
