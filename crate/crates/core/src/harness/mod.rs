//! Experiment orchestration: configuration, drivers, persistence.
//!
//! Trials are pure functions of `(spec, seed, trial index)`. They run on a
//! dedicated thread pool and are collected in index order, and every
//! reduction runs serially over that order, so the thread count never
//! changes a reported number.

pub mod config;
pub mod experiments;
pub mod output;

use std::time::Instant;

pub use config::{ExperimentKind, ExperimentSpec, Validation};
pub use output::RunReport;

use crate::error::{Error, Result};

/// Validates `spec` and runs it on `threads` workers (`None`: all cores).
pub fn run(spec: &ExperimentSpec, threads: Option<usize>) -> Result<RunReport> {
    let validation = spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let table = pool.install(|| match spec.experiment {
        ExperimentKind::Charfn => experiments::charfn(spec),
        ExperimentKind::Wegner => experiments::wegner(spec),
        ExperimentKind::Evcomp => experiments::evcomp(spec),
        ExperimentKind::Ils => experiments::ils(spec),
        ExperimentKind::Msa => experiments::run_msa(spec),
        ExperimentKind::Localize => experiments::localize(spec),
    })?;
    Ok(RunReport {
        spec: spec.clone(),
        validation,
        header: table.header,
        rows: table.rows,
        aggregates: table.aggregates,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Process exit code for an error: 2 invalid configuration, 3 budget
/// exceeded, 4 solver failure, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidParams(_)
        | Error::Domain(_)
        | Error::Range(_)
        | Error::DegenerateCore(_)
        | Error::EmptyBoundary
        | Error::NotNonInteractive
        | Error::RangeViolation
        | Error::Unsupported(_) => 2,
        Error::EnumerationTooLarge { .. } | Error::TooLarge { .. } | Error::Truncation { .. } => 3,
        Error::Convergence { .. } | Error::Resonant { .. } | Error::Uncertain { .. } | Error::InsufficientDecay(_) => 4,
        Error::Io(_) => 1,
    }
}
