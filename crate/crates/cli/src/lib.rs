//! Reproducible experiment runner for `nonneg-core`.
//!
//! An experiment is a JSON file naming a `kind` and the component configs
//! that kind needs. [`runner::run`] executes it and returns a summary plus a
//! samples CSV; both depend only on the file, never on the thread count.

pub mod error;
pub mod registry;
pub mod runner;
pub mod spec;

pub use error::{CliError, Result};
pub use runner::{run, Outcome, Summary};
pub use spec::{ExperimentKind, ExperimentSpec};
