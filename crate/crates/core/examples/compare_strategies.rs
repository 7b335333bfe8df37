//! Standard secondary restoration against the multipurpose law on the
//! bundled ring, with CSV and SVG output for both runs.
//!
//! cargo run --release --example compare_strategies -- out/compare

use adhocgrid::commands::{cmd_compare, RunOptions};
use adhocgrid::scenario::parse_scenario;

fn main() -> adhocgrid::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/compare".into());
    let scenario = parse_scenario("scenarios/paper_fig3.json")?;
    let outcome = cmd_compare(
        &scenario,
        &RunOptions {
            out: Some(out.into()),
            ..RunOptions::default()
        },
    )?;
    for run in outcome.report["runs"].as_array().into_iter().flatten() {
        let m = &run["metrics"];
        println!(
            "{:<20} sharing error {:.3e}  |v_bar - v_ref| {:.4} V  csv {}",
            run["controller"].as_str().unwrap_or_default(),
            m["sharing_error"].as_f64().unwrap_or(f64::NAN),
            m["voltage_error"].as_f64().unwrap_or(f64::NAN),
            run["csv"].as_str().unwrap_or_default()
        );
    }
    Ok(())
}
