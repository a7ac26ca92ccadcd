use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Daily high equals daily low, so the volatility proxy vanishes.
    #[error("degenerate volatility: high == low == {0}")]
    DegenerateVolatility(f64),

    /// An iterative method failed to converge or produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("inconsistent data in group {group}: {reason}")]
    DataInconsistency { group: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("calibration infeasible at N={n}: {reason}")]
    Infeasible { n: usize, reason: String },

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical method, as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::DegenerateRegression(_) | Error::ZeroVariance(_)
        )
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
