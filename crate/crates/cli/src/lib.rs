//! Command-line experiment drivers for the `ri-onset` library. Every run
//! writes CSV or JSON data plus a `<out>.manifest` file that replays it.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{Command, RunConfig, Settings};
pub use error::CliError;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "RI_ONSET_WORKERS";

/// Runs `f` on a pool sized by [`WORKERS_ENV`], or on the global pool when
/// the variable is unset.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
                CliError::Config(format!(
                    "{WORKERS_ENV} must be a positive integer, got '{v}'"
                ))
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}
