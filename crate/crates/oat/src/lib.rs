//! Command-line front end for `oat-core`: experiment configs, dataset and
//! checkpoint files, CSV/text reports and the `verify`, `gen`, `train`,
//! `eval` and `randtest` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
