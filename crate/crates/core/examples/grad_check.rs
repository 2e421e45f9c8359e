//! Compares every analytic gradient against central finite differences.
//!
//! cargo run --release --example grad_check

use awe::gradcheck::{run_all, GradCheckConfig};

fn main() -> awe::Result<()> {
    let cfg = GradCheckConfig::default();
    let results = run_all(&cfg)?;
    for r in &results {
        println!(
            "{:<40} seed {} params {:>4} max rel err {:.3e} (tol {:.0e}) {}",
            r.name,
            r.seed,
            r.checked,
            r.max_rel_err,
            r.tol,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{failed} of {} checks failed", results.len());
    Ok(())
}
