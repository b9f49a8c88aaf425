//! File formats, configuration and command implementations for the
//! `gamecode` binary. The numerical work lives in `gamecode-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

pub use config::{from_value, parse_config, Run, RunConfig};
pub use error::{CliError, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
