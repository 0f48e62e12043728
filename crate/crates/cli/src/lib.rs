//! Command-line front end: manifests, model files and the `build-scheme`,
//! `train`, `propose` and `evaluate` commands.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod model;

pub use commands::{run, Cli};
pub use error::{CliError, FileError};
