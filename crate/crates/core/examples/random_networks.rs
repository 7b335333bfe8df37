//! Draw random networks that pass the design rules and confirm each one
//! has a feasible, stable operating point.
//!
//! cargo run --release --example random_networks -- 42 5000

use adhocgrid::random::run_implication_suite;

fn main() -> adhocgrid::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);
    let count = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let summary = run_implication_suite(seed, count)?;
    println!("seed {seed}: {} of {} networks passed", summary.passed, summary.count);
    for f in &summary.failures {
        println!("  case {} ({} buses, {} lines): {:?}", f.case, f.n_buses, f.n_lines, f.failed_rules);
    }
    Ok(())
}
