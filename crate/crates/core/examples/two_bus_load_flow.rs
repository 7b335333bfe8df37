//! Newton load flow on one source and one constant power load, checked
//! against the closed-form root and swept up to the existence bound.

use adhocgrid::load_flow::{solve_load_flow, LoadFlowOptions, SourceModel};
use adhocgrid::network::{Bus, LineParams, NetworkGraph};

fn two_bus(p: f64) -> NetworkGraph {
    NetworkGraph::new(
        vec![Bus::source(0.5, 48.0), Bus::load(p, 845.7e-6)],
        vec![LineParams::with_time_constant(0, 1, 0.111, 55.45e-6)],
    )
}

fn main() -> adhocgrid::Result<()> {
    let bound = 48.0 * 48.0 / (4.0 * 0.111);
    println!("existence bound: {bound:.2} W");
    for frac in [0.0, 35.11 / bound, 0.25, 0.5, 0.9, 0.999, 1.001] {
        let p = frac * bound;
        let sol = solve_load_flow(&two_bus(p), 48.0, &SourceModel::Pinned, LoadFlowOptions::default())?;
        let disc = 48.0f64 * 48.0 - 4.0 * p * 0.111;
        let oracle = if disc >= 0.0 { format!("{:.9}", 0.5 * (48.0 + disc.sqrt())) } else { "none".into() };
        println!(
            "p = {p:>9.3} W  converged = {:<5}  iterations = {:>2}  v_load = {:>12.9}  root = {oracle}",
            sol.converged, sol.iterations, sol.v_star[1]
        );
    }

    let droop = solve_load_flow(&two_bus(35.11), 48.0, &SourceModel::Droop(vec![48.0]), LoadFlowOptions::default())?;
    println!("with the 0.5 ohm droop in series: v_source = {:.6}, v_load = {:.6}", droop.v_star[0], droop.v_star[1]);
    Ok(())
}
