//! Library side of the `semispec` command-line tool.

pub mod commands;
pub mod compare;
pub mod config;
pub mod output;
