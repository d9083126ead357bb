//! Library side of the `cvtool` binary: scenario files, output formats,
//! command implementations and verification suites.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;
