use alloc::string::String;

use crate::dcmdp::Trajectory;

/// Errors raised by `xpo-core`.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// An instance failed validation; `path` locates the offending field.
    #[error("invalid instance at {path}: {message}")]
    InvalidInstance { path: String, message: String },

    /// A trajectory total reward left `[0, rmax]`.
    #[error("trajectory starting at state {} has total reward {total} outside [0, {rmax}]", .witness.initial_state().0)]
    RewardRange {
        witness: Trajectory,
        total: f64,
        rmax: f64,
    },

    /// A trajectory does not follow the transition map.
    #[error("trajectory is not admissible at step {step}: {message}")]
    Inadmissible { step: usize, message: String },

    /// Enumeration would exceed the configured cap; use Monte Carlo instead.
    #[error("enumeration of {count} trajectories exceeds the cap of {cap}; use Monte Carlo estimation")]
    EnumerationCap { count: u128, cap: u64 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// Two trajectories in a comparison start from different initial states.
    #[error("trajectories start from different initial states ({left} vs {right})")]
    InitialStateMismatch { left: usize, right: usize },

    /// A policy puts mass on an action the reference policy excludes.
    #[error("support violation: {0}")]
    Support(String),

    #[error("empty {0}")]
    Empty(&'static str),

    /// Every candidate of a minimization evaluated to +inf or NaN.
    #[error("minimization failed: {0}")]
    Minimizer(String),

    /// A training loop failed at a given iteration.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    /// An internal consistency check failed.
    #[error("validation failed: {0}")]
    Validation(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: alloc::boxed::Box::new(self),
        }
    }
}
