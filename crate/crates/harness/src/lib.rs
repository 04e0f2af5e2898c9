//! Experiment runner for `hamlearn`: TOML configs, built-in datasets, paired
//! Hamiltonian/oracle runs, CSV logs and weight-difference summaries.

// Negated comparisons are how NaN is rejected in parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod datasets;
pub mod error;
pub mod experiment;

pub use config::ExperimentConfig;
pub use error::HarnessError;
pub use experiment::{compare_curves, run_experiment, write_outputs, CompareReport, ExperimentResult, Summary};
