//! Simulate any scenario file and write its trajectory CSV and plots.
//!
//! cargo run --release --example simulate_scenario -- scenarios/symmetric.json out/symmetric

use std::path::PathBuf;

use adhocgrid::commands::run_and_write;
use adhocgrid::scenario::parse_scenario;

fn main() -> adhocgrid::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "scenarios/paper_fig3.json".into());
    let scenario = parse_scenario(&path)?;
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| scenario.output.dir.clone());
    let (traj, summary) = run_and_write(&scenario, &scenario.controller, &dir, true)?;
    let last = traj.last();
    println!("{} samples, {} steps, {} rejected", summary.samples, summary.steps, summary.rejections);
    println!("t = {} s: v_bar = {:.5} V, P = {:?}", last.t, last.v_bar, last.source_power);
    println!("wrote {} and {} plots", summary.csv.display(), summary.plots.len());
    if let Some(f) = summary.failure {
        println!("stopped early: {f}");
    }
    Ok(())
}
