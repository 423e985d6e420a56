//! The concrete suite implementations (filled in alongside the modules).

use super::VerifyReport;

pub fn available_suites() -> Vec<&'static str> {
    vec![]
}

pub fn run_suite(name: &str) -> Option<VerifyReport> {
    let _ = name;
    None
}
