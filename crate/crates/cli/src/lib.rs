//! Experiment runner for `kpls-core`: synthetic data, CSV input and output,
//! model files and the `kpls` command line.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod persist;
pub mod rng;
pub mod table;

pub use cli::run;
pub use config::{DataSource, ExperimentConfig};
pub use error::CliError;
pub use experiments::{run_ci_demo, run_dof_experiment, run_runtime_benchmark, RuntimeRecord};
pub use kpls_core;
