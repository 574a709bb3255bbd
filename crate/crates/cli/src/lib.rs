//! Experiment driver: builds the operator, writes matrix and eigenvalue
//! files, runs stabilized and baseline purification and records traces and
//! diagnostics as CSV next to a JSON summary.

pub mod args;
pub mod manifest;
pub mod pipeline;

pub use manifest::ExperimentManifest;
pub use pipeline::{run_experiment, CliError, ExperimentSummary, Stage};
