use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input data describes a degenerate configuration (e.g. coincident sites with equal heights).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A stencil or index step left the padded grid.
    #[error("grid index out of range: {0}")]
    OutOfRange(String),

    /// A point that must coincide with a grid node does not.
    #[error("point ({x}, {y}) is not a grid node for spacing {h}")]
    OffGrid { x: f64, y: f64, h: f64 },

    /// The sparse linear solve failed.
    #[error("linear solve failed at Newton iteration {iteration}: {reason}")]
    LinearSolve { iteration: usize, reason: String },

    /// Backtracking could not reduce the residual.
    #[error("Newton stagnated at iteration {iteration} with residual {residual:e}")]
    Stagnation { iteration: usize, residual: f64 },

    /// An iterative procedure ran out of iterations.
    #[error("no convergence after {iterations} iterations (error {error:e})")]
    NonConvergence {
        iterations: usize,
        error: f64,
        /// Last iterate's per-item errors, when meaningful.
        detail: Vec<f64>,
    },

    /// Invalid experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
