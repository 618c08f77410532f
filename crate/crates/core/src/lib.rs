//! KL-regularized preference-based reinforcement learning on deterministic
//! contextual MDPs.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is pure
//! computation: exact soft dynamic programming, the DPO / optimistic DPO
//! objective family, Bradley-Terry labeling, the training loops and a set of
//! numerical diagnostics. File formats, the CLI and batch execution live in
//! the companion `xpo-lab` crate.
//!
//! Transcendental functions go through [`libm`] so results are bit-identical
//! across platforms, which the seeded run records rely on.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dcmdp;
pub mod diagnostics;
mod error;
pub mod instances;
pub mod math;
pub mod objective;
pub mod policy;
pub mod preference;
pub mod rng;
pub mod softdp;
pub mod trainer;

pub use dcmdp::{
    ActionId, Dcmdp, DcmdpSpec, FeatureMap, StateId, TabularPolicy, Trajectory, TrajectorySpace,
};
pub use error::{Error, Result};
pub use objective::{MinimizerConfig, ObjectiveConfig, PolicyClass, TieBreak};
pub use policy::{Clip, FinitePolicyClass, LogLinearFamily};
pub use preference::{PreferenceDataset, PreferencePair};
pub use softdp::{SoftSolution, StateActionFunction};
pub use trainer::{RunRecord, SamplingStrategy, TrainingSetup};
