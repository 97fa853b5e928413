//! Experiment driver for the stochastic thin-film laboratory: TOML
//! configuration, parallel ensembles, CSV/JSON artifacts and the `filmlab`
//! command line.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod io;

pub use config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("blow-up in {0} path(s)")]
    BlowUp(usize),
    #[error("property check failed: {0}")]
    Property(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("solver error: {0}")]
    Solver(#[from] filmlab_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::BlowUp(_) => 3,
            CliError::Property(_) => 4,
            CliError::Io(_) | CliError::Solver(_) => 1,
        }
    }
}

/// `f(0), …, f(count-1)` on a pool of `threads` workers (0 = all cores),
/// collected in index order.
pub fn par_map<T, F>(threads: usize, count: usize, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(u64) -> Result<T, CliError> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    pool.install(|| (0..count as u64).into_par_iter().map(&f).collect())
}
