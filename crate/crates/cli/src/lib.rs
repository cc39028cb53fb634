//! Library half of the `openxyz` command: configuration, output files and
//! the subcommand drivers.

pub mod commands;
pub mod config;
pub mod output;
