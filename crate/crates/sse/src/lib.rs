//! Configuration files, the design file format, output writers and the
//! subcommands behind the `sse` binary.

pub mod commands;
pub mod config;
pub mod design_file;
pub mod error;
pub mod output;

pub use config::Config;
pub use error::CliError;
