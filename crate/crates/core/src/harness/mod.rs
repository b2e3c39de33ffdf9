//! Command-line harness: configuration, experiment registry, runs and result files.

mod config;
mod experiments;
mod output;
mod run;
pub mod selftest;

pub use config::{ConfigDocument, Profile};
pub use experiments::{
    document_from_spec, experiments, load_config, AmerasianExperiment, Experiment,
    ExperimentRegistry, LoadedConfig, LookbackExperiment, QuadraticExperiment, References,
    Resolved,
};
pub use output::{
    checkpoint_text, curve_csv, emit_outputs, named_arrays, read_checkpoint, report_json,
    summary_csv, write_checkpoint, NamedArray, ResultsTable,
};
pub use run::run_experiment;

use std::path::PathBuf;

use crate::oracle::OracleError;
use crate::solver::SolverError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration ({}): {message}", keys.join(", "))]
    Validation { keys: Vec<String>, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl HarnessError {
    pub fn validation(keys: Vec<String>, message: String) -> Self {
        Self::Validation { keys, message }
    }

    /// Process exit code: 2 for invalid input, 3 for numerical aborts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } | Self::Solver(SolverError::Config(_)) | Self::Oracle(_) => 2,
            Self::Solver(SolverError::NonFinite(_)) => 3,
            _ => 1,
        }
    }
}
