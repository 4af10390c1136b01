use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("grid mismatch: expected shape {expected:?}, found {found:?}")]
    GridMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("ball does not fit in the grid: needs {required_padding} more cells of padding")]
    OutOfGrid { required_padding: usize },

    #[error("{solver} did not converge within {budget} iterations (residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        budget: usize,
        residual: f64,
    },

    #[error("ground state vanishes at cell {cell}: {detail}")]
    VanishingGroundState { cell: usize, detail: String },

    #[error("degenerate ground-state gap: lambda_2 - lambda_1 = {gap:.3e}")]
    DegenerateGap { gap: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
