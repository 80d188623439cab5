use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    /// The potential scale parameter must be strictly positive and finite.
    #[error("potential scale must be strictly positive and finite, got {0}")]
    InvalidScale(f64),

    /// A numeric input was NaN or infinite where a finite value is required.
    #[error("{context}: all values must be finite")]
    NonFinite { context: &'static str },

    /// A vector or matrix argument was empty where at least one element is required.
    #[error("{0} must contain at least one element")]
    Empty(&'static str),

    /// Mismatched dimensions between related arguments.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// The scale was reported undefined while some regret is positive.
    #[error("scale is undefined although some regret is positive (solver contract violation)")]
    ScaleContract,

    /// A weight vector failed its simplex invariants.
    #[error("invalid weight vector: {reason}")]
    InvalidWeights { reason: &'static str },

    /// A time query outside the domain covered by the scenario.
    #[error("time {t} is outside the scenario domain")]
    TimeOutOfRange { t: f64 },

    /// A scenario definition failed validation.
    #[error("invalid scenario: {reason}")]
    InvalidScenario { reason: String },

    /// A simulation grid failed validation.
    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },

    /// The simulation produced a non-finite value.
    #[error("simulation produced a non-finite value at step {step}")]
    NonFiniteSimulation { step: usize },

    /// A policy parameter was out of range.
    #[error("invalid policy parameter: {reason}")]
    InvalidPolicy { reason: &'static str },

    /// The quantile query selects no instrument: floor(epsilon * N) must be >= 1.
    #[error(
        "epsilon {epsilon} with {n} experts gives floor(epsilon*N) = 0; \
         floor(epsilon*N) >= 1 is required, use a larger epsilon"
    )]
    QuantileTooSmall { epsilon: f64, n: usize },

    /// Epsilon must lie in (0, 1].
    #[error("quantile epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),

    /// Bisection failed to bracket or converge (should not happen for valid inputs).
    #[error("scale solver failed: {reason}")]
    SolverFailure { reason: &'static str },
}

pub type Result<T> = std::result::Result<T, CoreError>;
