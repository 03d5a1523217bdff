//! Runs every lemma suite on randomized instances and prints the largest
//! normalized violation of each.

use pnpi::oracle::{verify_lemma, LemmaSuite};

fn main() -> pnpi::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    for suite in LemmaSuite::ALL {
        let r = verify_lemma(suite, trials, 7)?;
        println!("{:<9} {:<4} {:+.3e}", suite.name(), if r.passed { "ok" } else { "FAIL" }, r.max_violation);
        for c in &r.checks {
            println!("    {:<40} {:+.3e}", c.name, c.max_violation);
        }
        if let Some(c) = r.tight_composite_constant {
            println!("    tight composite constant {c:.9} (bound 1/3)");
        }
    }
    Ok(())
}
