//! File formats, reports, checkpoints and the experiment driver for the
//! `sesim-core` simulator.
//!
//! - [`config`]: `key = value` SES configuration files and the config hash.
//! - [`data`]: scenario CSV ingestion/export and the scenario manifest.
//! - [`checkpoint`]: versioned text dump of a trained agent.
//! - [`report`]: CSV writers for every report the CLI emits.
//! - [`experiment`]: train / evaluate / sweep / ablation drivers.
//! - [`cli`]: command-line front end.

use std::path::{Path, PathBuf};

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod experiment;
pub mod report;

/// Environment variable naming the directory relative scenario paths resolve against.
pub const DATA_DIR_ENV: &str = "SESIM_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{}, line {line}: {msg}", path.display())]
    Data { path: PathBuf, line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] sesim_core::Error),
    #[error("{0}")]
    Invalid(String),
}

impl IoError {
    pub fn file(path: &Path, source: std::io::Error) -> Self {
        Self::File { path: path.to_path_buf(), source }
    }
}
