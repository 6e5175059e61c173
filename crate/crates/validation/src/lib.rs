//! Reporting for the acceptance suite in `tests/acceptance.rs`.
//!
//! Each criterion is a plain function returning an [`Outcome`]. The runner
//! prints one line per criterion and a closing tally.

use std::io::Write;
use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

/// Label and check of one criterion.
pub type Criterion = (&'static str, fn() -> Outcome);

pub fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Runs every criterion in order and returns the number that failed.
pub fn run_criteria(criteria: &[Criterion], out: &mut impl Write) -> usize {
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        writeln!(out, "{}", line(i + 1, name, &o, start.elapsed().as_secs_f64())).expect("report is writable");
        out.flush().expect("report is writable");
    }
    writeln!(out, "acceptance: {} passed, {failed} failed", criteria.len() - failed).expect("report is writable");
    failed
}

fn line(index: usize, name: &str, o: &Outcome, seconds: f64) -> String {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    format!("criterion {index:>2} [{verdict}] {name}: {} ({seconds:.1} s)", o.detail)
}
