//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Mean velocity coincides with the target; the system is uncontrollable.
    #[error("DegenerateMean: |mean velocity - target| = {norm:.3e} <= {tol:.1e}")]
    DegenerateMean { norm: f64, tol: f64 },

    /// A strategy was asked for a state with non-positive projected mean.
    #[error("NonPositiveMean: mean projected velocity {xibar:.3e} must be positive")]
    NonPositiveMean { xibar: f64 },

    /// A control vector violates the admissible set (per-agent bounds or budget).
    #[error("InadmissibleControl: {reason}")]
    InadmissibleControl { reason: String },

    /// Budget outside the range a synthesis routine is defined for.
    #[error("BudgetOutOfRange: budget {budget} not in {expected}")]
    BudgetOutOfRange { budget: f64, expected: String },

    /// Integration produced a NaN or infinity.
    #[error("NonFiniteState: non-finite state component at t = {time}")]
    NonFiniteState { time: f64 },

    /// Closed-form evaluation requires piecewise-constant control.
    #[error("UnsupportedSchedule: {reason}")]
    UnsupportedSchedule { reason: String },

    /// A control plan does not tile its horizon or is otherwise malformed.
    #[error("InvalidPlan: {reason}")]
    InvalidPlan { reason: String },

    /// Malformed input data (dimension mismatches, bad files, ...).
    #[error("InvalidInput: {reason}")]
    InvalidInput { reason: String },
}

impl Error {
    /// Stable machine-readable name, used by the CLI diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DegenerateMean { .. } => "DegenerateMean",
            Error::NonPositiveMean { .. } => "NonPositiveMean",
            Error::InadmissibleControl { .. } => "InadmissibleControl",
            Error::BudgetOutOfRange { .. } => "BudgetOutOfRange",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::UnsupportedSchedule { .. } => "UnsupportedSchedule",
            Error::InvalidPlan { .. } => "InvalidPlan",
            Error::InvalidInput { .. } => "InvalidInput",
        }
    }

    pub fn invalid_input(reason: impl Into<String>) -> Self {
        Error::InvalidInput { reason: reason.into() }
    }

    pub fn invalid_plan(reason: impl Into<String>) -> Self {
        Error::InvalidPlan { reason: reason.into() }
    }
}
