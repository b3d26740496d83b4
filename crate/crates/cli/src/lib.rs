//! Experiment plumbing behind the `occunash` binary: layered configuration,
//! seeded batch runs and summary statistics.

pub mod experiment;
pub mod summary;

pub use experiment::{run_batch, CliError, ExperimentSpec, Layer, Toggle};
pub use summary::Summary;
