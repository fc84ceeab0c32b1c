//! Command-line pipeline for harvester community analysis.
//!
//! Subcommands: `cluster` (full pipeline: log -> similarity -> k-NN
//! graph -> spectral partition -> artifacts), `synth` (planted-community
//! log generation), `validate` (score a cluster CSV against labels or
//! ground truth), `ingest-report` (monthly volume), and `export`
//! (similarity/graph artifacts without clustering).
//!
//! Exit codes: 0 success, 1 pipeline error, 2 empty month window,
//! 64 usage error.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    EmptyData(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 64,
            CliError::EmptyData(_) => 2,
            CliError::Pipeline(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Pipeline(format!("I/O error: {e}"))
    }
}

impl From<harvnet::ingest::IngestError> for CliError {
    fn from(e: harvnet::ingest::IngestError) -> Self {
        use harvnet::ingest::IngestError::*;
        match e {
            EmptyWindow { .. } => CliError::EmptyData(e.to_string()),
            InvalidMonth(_) => CliError::Usage(e.to_string()),
            other => CliError::Pipeline(other.to_string()),
        }
    }
}

macro_rules! pipeline_error_from {
    ($($ty:path),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Pipeline(e.to_string())
            }
        })*
    };
}

pipeline_error_from!(
    harvnet::similarity::SimilarityError,
    harvnet::graph::GraphError,
    harvnet::spectral::SpectralError,
    harvnet::validation::ValidationError,
    harvnet::phishing::PhishingError,
);

/// Dispatches a parsed command line.
pub fn run(cli: args::Cli) -> CliResult<()> {
    match cli.command {
        args::Command::Cluster(a) => commands::cmd_cluster(a),
        args::Command::Synth(a) => commands::cmd_synth(a),
        args::Command::Validate(a) => commands::cmd_validate(a),
        args::Command::IngestReport(a) => commands::cmd_ingest_report(a),
        args::Command::Export(a) => commands::cmd_export(a),
    }
}
