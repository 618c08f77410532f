//! Experiment harness for `xpo-core`: instance registry and file format,
//! TOML configs, seeded batch execution and plain-text outputs.

pub mod classes;
pub mod cli;
pub mod config;
pub mod counterexample;
pub mod diagnose;
pub mod error;
pub mod instance;
pub mod output;
pub mod runner;
pub mod spec;
pub mod summary;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
