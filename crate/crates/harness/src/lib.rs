//! Configuration-driven experiment harness for `sindy-rl`.

pub mod compare;
pub mod config;
pub mod report;
pub mod results;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig};
pub use runner::{fit_only, run_experiment, worker_count, HarnessError, ResultTable, SeedOutcome, SeedStatus};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const RUNTIME: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
}
