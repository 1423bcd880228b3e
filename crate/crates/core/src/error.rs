use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: dimensions, extents, option ranges, malformed tables.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller broke an operation's precondition (mismatched grids, θ ≤ 0, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The pair potential is not finite (or not bounded below) where it must be.
    #[error("potential domain error: {0}")]
    PotentialDomain(String),

    /// The requested energy lies at or below the ground-state energy, or no
    /// configuration with I < εN² could be found.
    #[error("infeasible energy: {0}")]
    Infeasible(String),

    #[error("no branch converged: {message}")]
    NonConvergence {
        message: String,
        residual_history: Vec<f64>,
    },

    /// Damping was halved the maximum number of times without restoring θ > 0.
    #[error("iteration stalled: {0}")]
    Stall(String),

    /// A multi-stage estimator failed part-way; `completed` holds finished stages.
    #[error("partial result after {completed} of {total} stages: {message}")]
    Partial {
        message: String,
        completed: usize,
        total: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
