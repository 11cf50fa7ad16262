//! Configuration files, subcommand drivers and on-disk artifacts.

pub mod config;
pub mod export;
pub mod run;

pub use config::{parse_config, Mode, ProblemConfig};
pub use export::{read_diagnostics, read_snapshot, DiagnosticsRow, SnapshotRow};
pub use run::{execute, Outcome, Overrides, RunReport, OUT_DIR_ENV};

/// Environment variable sizing the worker pool.
pub const THREADS_ENV: &str = "CHEMOMECH_THREADS";

/// Size the global rayon pool from `CHEMOMECH_THREADS` when set.
pub fn init_threads() -> crate::Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| crate::Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer (got `{v}`)")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::Error::InvalidConfig(format!("cannot size the thread pool: {e}")))
}
