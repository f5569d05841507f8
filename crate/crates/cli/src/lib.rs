//! Experiment harness: evaluation of the calibration methods, the synthetic
//! benchmark and the `wrcp` command-line front end.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod svg;

pub use error::CliError;
