//! Scenario files, Monte Carlo experiments and their CSV/JSON outputs.

pub mod experiments;
pub mod report;
pub mod scenario;

pub use experiments::{run_experiment, ExperimentOutput, Record, RunOptions};
pub use report::{aggregate, write_outputs, Aggregate};
pub use scenario::{ExperimentKind, Scenario};
