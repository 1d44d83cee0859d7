//! Experiment driver for the `c0-estimate` toolkit: descriptors, pointwise
//! suites and the subcommand implementations behind `c0est`.

pub mod checks;
pub mod commands;
pub mod descriptor;

pub use commands::Status;
pub use descriptor::ExperimentDescriptor;
