//! Unequal participation factors: the multipurpose law settles at
//! P1 : P2 : P3 = 2 : 1 : 1 while restoring the mean source voltage.

use adhocgrid::controllers::ControllerKind;
use adhocgrid::dynamics::{initial_state, simulate, SimConfig};
use adhocgrid::scenario::parse_scenario;

fn main() -> adhocgrid::Result<()> {
    let scenario = parse_scenario("scenarios/paper_fig3.json")?;
    let graph = scenario.graph()?;
    let kind = ControllerKind::Multipurpose {
        k_v: 36.04,
        k_lambda: 0.7508,
        lambda: vec![1.5, 0.75, 0.75],
    };
    let config = SimConfig {
        t_end: 1.0,
        max_step: 1e-5,
        sample_interval: 0.1,
        ..SimConfig::default()
    };
    let init = initial_state(&graph, scenario.v_ref, scenario.sim.initial)?;
    let traj = simulate(&graph, &kind, scenario.v_ref, &scenario.events(), &config, &init)?;
    for s in &traj.samples {
        let p = &s.source_power;
        println!(
            "t = {:.1} s  P = [{:7.3}, {:7.3}, {:7.3}] W  P1/P2 = {:.5}  v_bar = {:.6} V",
            s.t,
            p[0],
            p[1],
            p[2],
            p[0] / p[1],
            s.v_bar
        );
    }
    Ok(())
}
