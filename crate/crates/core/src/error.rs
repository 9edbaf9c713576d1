use crate::accel::Trace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Iteration budget exhausted. Carries the best iterate seen (flattened).
    #[error("no convergence after {iterations} iterations (best gradient norm {best_gnorm:.3e})")]
    NonConvergence {
        iterations: usize,
        best_gnorm: f64,
        best: Vec<f64>,
    },

    /// A non-finite value appeared. Carries the partial trace.
    #[error("iteration diverged at step {step}")]
    Divergence { step: usize, trace: Box<Trace> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("not a descent direction (slope {0:.3e})")]
    NotDescent(f64),

    #[error("remaining spectrum is not positive: {0:?}")]
    DegenerateSpectrum(Vec<f64>),

    #[error("0 lies in the field of values (distance {nu:.3e})")]
    ZeroInFov { nu: f64 },

    #[error("upper bound unavailable: no admissible ellipse parameter (delta1 = {delta1})")]
    BoundUnavailable { delta1: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
