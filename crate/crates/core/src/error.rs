use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected} sites, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("axis {axis} out of range for a {dim}-dimensional lattice")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("non-finite state at step {step} (t = {time}); reduce dt or use the tamed scheme")]
    NonFinite { step: usize, time: f64 },

    #[error("path {path_index} (seed {base_seed}) failed: {source}")]
    Path {
        base_seed: u64,
        path_index: u64,
        source: Box<Error>,
    },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("hypothesis {0} violated")]
    Hypothesis(String),

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{0}")]
    Oracle(String),

    #[error("equilibrium search did not converge: residual {residual:.3e} after {newton_steps} Newton steps")]
    NoEquilibrium { residual: f64, newton_steps: usize },

    #[error("non-finite adjoint state at step {0}")]
    NonFiniteAdjoint(usize),

    #[error("unknown check id `{0}`")]
    UnknownCheck(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
