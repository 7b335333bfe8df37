//! Certify a scenario: design rules on its envelope, then the
//! topology-aware checks at the solved operating point.
//!
//! cargo run --example certify -- scenarios/paper_fig3.json

use adhocgrid::certificates::certify_network;
use adhocgrid::scenario::parse_scenario;

fn main() -> adhocgrid::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "scenarios/paper_fig3.json".into());
    let scenario = parse_scenario(&path)?;
    let graph = scenario.peak_graph()?;
    let cert = certify_network(&graph, scenario.v_ref, scenario.v_min())?;

    println!("{path}: p_sigma = {:.2} W, R_sigma = {:.3} ohm", cert.envelope.p_sigma, cert.envelope.r_sigma);
    for e in cert.design_rules.entries.iter().chain(&cert.topology_aware.entries) {
        let mark = if e.pass { "ok  " } else { "FAIL" };
        println!("  {mark} {:<22} {:>12.6} vs {:>12.6} {}", e.rule, e.lhs, e.rhs, e.units);
    }
    if let Some(z) = cert.z_inf_star {
        println!("  worst effective resistance to the sources: {z:.4} ohm");
    }
    println!("certified: {}", cert.pass);
    Ok(())
}
