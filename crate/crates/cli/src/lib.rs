//! Scenario files, command dispatch and report emission for the `gradeq` binary.

pub mod error;
pub mod report;
pub mod reproduce;
pub mod run;
pub mod scenario;

pub use error::{CliError, Result};
pub use report::{emit_report, Format};
pub use run::{run_command, Command, Overrides, RunConfig, RunOutcome};
pub use scenario::{export_scenario, load_scenario, parse_scenario};
