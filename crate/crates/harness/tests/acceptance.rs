//! Acceptance criteria, one line per criterion.
//!
//! Criteria 2 and 5 are known to fail as stated; for those the diagnostic
//! checks printed beneath them must hold instead. Set `RMBP_FULL=1` for
//! the large sample counts.

use std::process::ExitCode;

use rmbp_harness::checks::{criterion, Context};

const KNOWN_RED: &[u32] = &[2, 5];

fn main() -> ExitCode {
    let full = std::env::var("RMBP_FULL").is_ok_and(|v| v == "1");
    let ctx = Context::new(1, full);
    let mut failures = Vec::new();
    println!("acceptance criteria ({} scale, seed {})", if full { "full" } else { "desk" }, ctx.seed);
    for id in 1..=12 {
        let r = match criterion(id, &ctx) {
            Ok(r) => r,
            Err(e) => {
                println!("criterion {id:>2} FAIL: error: {e}");
                failures.push(format!("criterion {id}: {e}"));
                continue;
            }
        };
        println!("{}", r.line());
        for d in &r.diagnostics {
            println!("    {} {}: {}", if d.passed { "ok  " } else { "FAIL" }, d.name, d.detail);
        }
        if KNOWN_RED.contains(&id) {
            if !r.passed {
                println!("    (known red: see the decisions ledger)");
            }
            for d in r.diagnostics.iter().filter(|d| !d.passed) {
                failures.push(format!("criterion {id} diagnostic {}", d.name));
            }
        } else if !r.passed {
            failures.push(format!("criterion {id}"));
        }
    }
    if failures.is_empty() {
        println!("acceptance: ok");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed: {}", failures.join("; "));
        ExitCode::FAILURE
    }
}
