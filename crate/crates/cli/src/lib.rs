//! Experiment runner for `pinlab`: JSON configurations, seeded replica
//! orchestration, CSV and JSON outputs, and markdown reports.

pub mod config;
pub mod error;
pub mod record;
pub mod report;
pub mod run;
pub mod sweep;
mod verify;

pub use config::{Command, ExperimentConfig};
pub use error::CliError;
pub use record::{Check, ResultRecord, Table};
pub use report::emit_report;
pub use run::{execute, run, write_outputs, RunOptions};

/// Runs `config` on a dedicated pool of `workers` threads.
pub fn execute_with_workers(
    config: &ExperimentConfig,
    opts: &RunOptions,
    workers: usize,
) -> Result<ResultRecord, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.into()))?;
    pool.install(|| execute(config, opts))
}
