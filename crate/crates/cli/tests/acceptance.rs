//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//!
//! `ACCEPT_ONLY=oracle,kernels cargo test --test acceptance` runs a subset.

use std::process::ExitCode;

use markov_oftrl_cli::acceptance::{run_criteria, select};

fn main() -> ExitCode {
    // Ignore libtest flags such as `--nocapture` passed through by cargo.
    let only: Option<Vec<String>> = std::env::var("ACCEPT_ONLY")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let selected = match select(only.as_deref()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    println!("running {} acceptance criteria", selected.len());
    let results = run_criteria(&selected, |line| println!("{line}"));
    let failed: Vec<_> = results.iter().filter(|r| !r.outcome.passed).map(|r| r.name).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
