//! Command implementations behind the `distractor-align` binary.

pub mod commands;
pub mod config;

use std::io;
use std::path::PathBuf;

use distractor_align::{Aggregation, Approach};
use thiserror::Error;

pub use commands::{
    cmd_analyze, cmd_report, cmd_score, cmd_synth, cmd_validate, score_with, AnalyzeOutput, ReportOutput,
    ScoreStats, ValidateReport,
};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("no data: {0}")]
    NoData(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) | CliError::Other(_) => 1,
            CliError::Backend(_) => 2,
            CliError::NoData(_) => 3,
        }
    }
}

/// Command-line values that replace config fields when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub models: Option<Vec<String>>,
    pub approaches: Option<Vec<Approach>>,
    pub aggregations: Option<Vec<Aggregation>>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(names) = &self.models {
            cfg.select_models(names)?;
        }
        if let Some(a) = &self.approaches {
            cfg.approaches = a.clone();
        }
        if let Some(a) = &self.aggregations {
            cfg.aggregations = a.clone();
        }
        if let Some(out) = &self.out_dir {
            // relative to the working directory, like any other CLI path
            cfg.out_dir = std::path::absolute(out)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(())
    }
}
