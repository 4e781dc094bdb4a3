use thiserror::Error;

/// Errors shared by the solver and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested operation is only defined on a restricted parameter range.
    #[error("outside domain of validity: {0}")]
    Domain(String),

    /// An adaptive quadrature or refinement loop failed to reach its target.
    #[error("accuracy target not reached: {0}")]
    Accuracy(String),

    /// A non-finite value appeared where a finite one is required.
    #[error("non-finite value: {0}")]
    Overflow(String),

    /// The configuration is valid but not handled by this routine.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// An iterative solver stagnated before reaching its tolerance.
    #[error("failed to converge: {0}")]
    Convergence(String),

    /// The adaptive step size underflowed before the integration finished.
    #[error("step size underflow: {0}")]
    Stiffness(String),

    /// Model hypotheses failed validation; each entry names the failed clause.
    #[error("hypothesis violations: {0:?}")]
    Hypotheses(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
