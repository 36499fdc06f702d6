//! File-level plumbing behind the command-line tool: CSV ingestion, run
//! configuration, the detect/estimate/critvals/simulate runs and the
//! experiment grid. Every report embeds its configuration.

pub mod config;
pub mod experiment;
pub mod ingest;
pub mod run;

pub use config::{Command, RunConfig, StatChoice};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};
pub use ingest::ingest_csv;
pub use run::{run_critvals, run_detect, run_estimate, run_simulate};

/// Sizes the global worker pool; `None` keeps rayon's default.
pub fn init_threads(threads: Option<usize>) -> crate::Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| crate::Error::Config(e.to_string()))?;
    }
    Ok(())
}
