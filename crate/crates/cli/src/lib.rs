//! Config-driven experiment runner for the `homeadam` optimizers.
//!
//! Each run command reads an [`ExperimentConfig`], echoes it resolved into
//! the output directory as `config.resolved`, and writes CSV traces plus a
//! `summary.json`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_bounds, cmd_plotdata, cmd_stability, cmd_train, presets_table, RunSummary};
pub use config::ExperimentConfig;
pub use error::CliError;
