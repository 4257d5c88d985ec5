//! Command-line surface over `cizsl-core`: every command reads its inputs,
//! writes CSV tables under one output directory and finishes with
//! `run_manifest.json`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;

pub use args::Cli;
pub use commands::{run, RunResult};
pub use error::{CliError, Result};
