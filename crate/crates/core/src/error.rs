use thiserror::Error;

/// Errors produced by the solver suite.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A run or spectrum configuration is inconsistent.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Input data failed a validation check (shape, symmetry, refinement ladder, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// The per-step linear solve did not reach the residual contract.
    #[error("linear solve failed after {iterations} iterations (relative residual {residual:.3e})")]
    Solve { iterations: usize, residual: f64 },

    /// A timestep failed; carries the step index and the underlying cause.
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// A geometric computation had no well-defined answer (e.g. target on a Nyquist curve).
    #[error("indeterminate result: {0}")]
    Indeterminate(String),

    /// The stability scan range was too small to bracket the unstable band.
    #[error("scan range error: {0}")]
    ScanRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure(cond: bool, make: impl FnOnce() -> Error) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(make())
    }
}
