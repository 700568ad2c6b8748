//! Config-driven runs of the two-scale solver and its single-scale reference.

pub mod config;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod output;

pub use config::{parse_config, RunConfig, SolverChoice};
pub use error::CliError;
pub use experiment::{execute, run_experiment, write_outputs, ErrorRow, Report};
pub use matrix::{run_matrix, Summary, SummaryRow};
pub use output::{read_snapshots, write_snapshots};
