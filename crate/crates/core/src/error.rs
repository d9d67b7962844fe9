use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = SqgError> = std::result::Result<T, E>;

/// Errors raised by solvers, samplers, and instance constructors.
///
/// The variants are coarse on purpose: callers branch on *kind* (bad input
/// vs. diverged run vs. I/O), while the message carries the specifics a user
/// needs to fix their configuration.
#[derive(Debug, Error)]
pub enum SqgError {
    /// A function argument violates its documented precondition
    /// (dimension mismatch, empty sample set, non-positive step size, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration value is out of range or inconsistent with the
    /// problem it is applied to.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A Langevin chain produced a non-finite state or exceeded the
    /// divergence guard. `chain`/`step` locate the failure when known.
    #[error(
        "sampler diverged{}{}: {message}; reduce the step size h (or supply a \
         smoothness estimate so the h < 2λ/L̂ check can reject the step size up front)",
        chain.map(|c| format!(" in chain {c}")).unwrap_or_default(),
        step.map(|s| format!(" at step {s}")).unwrap_or_default()
    )]
    SamplerDivergence {
        chain: Option<usize>,
        step: Option<usize>,
        message: String,
    },

    /// A deterministic descent loop (penalty baseline) produced a non-finite
    /// iterate or objective value.
    #[error("descent diverged at iteration {iter}: {message}; reduce joint_step or gamma")]
    DescentDivergence { iter: usize, message: String },

    /// An analytic derivative supplied with a problem disagrees with finite
    /// differences at registration time.
    #[error("gradient check failed: {0}")]
    GradientCheck(String),

    /// Dataset or report files could not be written.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl SqgError {
    /// Shorthand used throughout the crate for precondition violations.
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SqgError::InvalidArgument(msg.into())
    }

    /// Shorthand for configuration errors.
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SqgError::Config(msg.into())
    }
}
