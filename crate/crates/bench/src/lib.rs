//! Benchmark harness: loads a suite configuration, runs every controller on a
//! shared set of generated scenes and writes per-episode records plus
//! quartile summaries.

pub mod config;
pub mod output;
pub mod stats;
pub mod suite;

pub use config::{BenchConfig, OutputPaths};
pub use output::{emit, preflight};
pub use stats::{aggregate, MetricsSummary, Stats};
pub use suite::{run_suite, Record};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error("scene generation failed for {scenario} n_ped={n_ped} scene {index} (seed {seed}): {message}")]
    Generation {
        scenario: String,
        n_ped: usize,
        index: usize,
        seed: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed records file: {0}")]
    Records(String),
}

impl BenchError {
    /// Process exit code: 2 for generation failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Generation { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<socnav::Error> for BenchError {
    fn from(e: socnav::Error) -> Self {
        BenchError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
