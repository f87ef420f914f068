//! Batch driver for `onsager` simulations: JSON configuration in, CSV
//! series and snapshots plus a JSON manifest out.

use std::path::PathBuf;

pub mod config;
pub mod initial;
pub mod output;
pub mod run;

pub use config::{parse_config, RunConfig};
pub use initial::builtin_initial_condition;
pub use output::{read_snapshot, write_series, write_snapshot, OutputBundle};
pub use run::{run_simulation, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("unknown initial profile `{0}`")]
    UnknownProfile(String),

    /// The model or initial state could not be built.
    #[error("setup failed: {0}")]
    Setup(onsager::Error),

    #[error("solver failed at step {step}: {source}")]
    Solver { step: usize, source: onsager::Error },

    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for configuration problems, 3 for solver failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) | CliError::UnknownProfile(_) | CliError::Setup(_) => 2,
            CliError::Solver { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }
}
