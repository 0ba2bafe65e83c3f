//! Pipeline driver for the PiCA desk lab.
//!
//! Commands generate a world and a labelled corpus, train and serve the reward
//! model, train policies under the three reward arms, evaluate them and export
//! plot-ready CSV. Each command writes into `<out>/<command>-seed<seed>-<hash>/`,
//! where `<hash>` covers the effective configuration and the input artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod run_dir;

pub use config::{Config, ConfigError};
pub use error::CliError;
pub use run_dir::RunDir;
