//! Experiment harness: trajectory generation and ingestion, TOML
//! configuration, experiment orchestration with JSON/CSV reports, and the
//! command-line interface.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod trajectory;
