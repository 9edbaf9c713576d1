//! Experiment harness for fixed-point acceleration on CP decompositions.
//!
//! A JSON configuration describes the problem source, the methods to run and
//! which analyses to produce; see the README for the schema.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod format;
pub mod instance;
pub mod methods;
pub mod run;
pub mod tables;

pub use config::{ConfigError, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use run::{cmd_run, RunReport};
