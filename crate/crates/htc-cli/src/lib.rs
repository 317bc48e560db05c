//! Library surface of the `htc` command-line harness: configuration
//! loading, output artifacts and subcommand implementations.

pub mod artifacts;
pub mod commands;
pub mod config;
