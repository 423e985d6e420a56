//! Named verification suites: each runs a set of checks with pinned targets
//! and tolerances and reports machine-readable results. The acceptance
//! integration tests and the CLI `verify` subcommand both drive these.

use serde::{Deserialize, Serialize};

/// One check record: pass iff |value - target| <= tolerance + certified_error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub certified_error: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(name: &str, value: f64, certified_error: f64, target: f64, tolerance: f64) -> Self {
        let pass = (value - target).abs() <= tolerance + certified_error;
        CheckRecord { name: name.to_string(), value, certified_error, target, tolerance, pass }
    }
}

/// Report of one named suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: String,
    pub checks: Vec<CheckRecord>,
    pub wall_seconds: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Budget multiplier from the GHLAB_BUDGET environment variable (default 1).
pub fn budget() -> f64 {
    std::env::var("GHLAB_BUDGET")
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|v| *v > 0.0)
        .unwrap_or(1.0)
}

mod suites;
pub use suites::{available_suites, run_suite};
