use thiserror::Error;

/// Errors raised by problem construction, the solvers and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdmmError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "objective has no exact expectation; supply the reference objective value theta(u*) explicitly"
    )]
    NoExactObjective,

    #[error("x-subproblem inner loop stopped after {iterations} iterations with projected-gradient norm {residual:e}")]
    InnerSolve { iterations: usize, residual: f64 },

    #[error("line 1 of deterministic ADMM has no closed form for this problem ({0}); use the linearized or stochastic variant")]
    NoClosedForm(String),

    #[error("y-update requires B to be a scaled identity for prox-based updates ({0}); use a smooth regularizer so the inner quadratic solver applies")]
    UnsupportedB(String),

    #[error("linearization matrix G is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("reference solve exhausted its budget of {budget} iterations with residual {residual:e}")]
    ReferenceBudget { budget: usize, residual: f64 },

    #[error("rate fit: {0}")]
    RateFit(String),

    #[error("expectation estimate: {0}")]
    Expectation(String),

    #[error("high-probability check requires a bounded oracle: {0}")]
    UnboundedOracle(String),

    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl AdmmError {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        AdmmError::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }
}

impl From<std::io::Error> for AdmmError {
    fn from(e: std::io::Error) -> Self {
        AdmmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AdmmError>;
