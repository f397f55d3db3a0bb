//! Command-line front end: argument and config handling, the JSON report
//! and one runner per subcommand.

pub mod config;
pub mod error;
pub mod report;
mod run;

pub use config::{Command, RunConfig};
pub use error::CliError;
pub use report::{validate_report, Report};
pub use run::run;
