//! Acceptance suite: runs every criterion at full budget and prints one
//! line per criterion. A criterion passes when all its checks hold and it
//! finishes within its time limit.

use std::process::ExitCode;

use acim_core::replication::{replicate, ReplicationBudget};

const SEED: u64 = 20240917;

fn main() -> ExitCode {
    let mut failures = 0;
    let summary = replicate(&ReplicationBudget::full(), SEED, |row| {
        let ok = row.pass && row.within_time();
        if !ok {
            failures += 1;
        }
        let timing = if row.within_time() { "" } else { " [FAIL: over time limit]" };
        println!("{}{timing}", row.summary_line());
    });
    println!(
        "acceptance: {} of {} criteria pass",
        summary.rows.len() - failures,
        summary.rows.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
