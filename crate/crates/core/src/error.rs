use thiserror::Error;

/// Errors surfaced by the planning/estimation/control stack.
#[derive(Error, Debug)]
pub enum Error {
    #[error("model error: {0}")]
    Model(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("no path found: {0}")]
    NoPath(String),

    #[error("robustness infeasible: {0}")]
    TubeInfeasible(String),

    #[error("insufficient excitation on axis {axis}")]
    InsufficientExcitation { axis: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
