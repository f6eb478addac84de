//! Experiment harness for adaptive skip-interval training.

pub mod commands;
pub mod config;
pub mod metrics;

use asi_core::Error;

/// CLI exit codes: 0 success, 1 usage/config, 2 I/O, 3 numeric failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::Dimension { .. } => 1,
        Error::Io(_) | Error::Format { .. } | Error::Generation(_) => 2,
        Error::Numeric(_) => 3,
    }
}

/// Honor the ASI_THREADS worker bound, when set.
pub fn init_thread_pool() {
    if let Ok(n) = std::env::var("ASI_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
}
