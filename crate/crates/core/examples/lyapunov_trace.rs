//! The Lyapunov function along an uncoordinated-control trajectory on a
//! small certified network.

use adhocgrid::certificates::certify_network;
use adhocgrid::controllers::ControllerKind;
use adhocgrid::dynamics::{initial_state, simulate, InitialCondition, SimConfig};
use adhocgrid::network::{Bus, LineParams, NetworkGraph};

fn main() -> adhocgrid::Result<()> {
    let c = 845.7e-6;
    let graph = NetworkGraph::new(
        vec![Bus::source(0.5, 48.0), Bus::load(60.0, c), Bus::load(40.0, c), Bus::source(0.3, 48.0)],
        vec![
            LineParams::with_time_constant(0, 1, 0.111, 55.45e-6),
            LineParams::with_time_constant(1, 2, 0.2, 40e-6),
            LineParams::with_time_constant(2, 3, 0.15, 55.45e-6),
            LineParams::with_time_constant(0, 2, 0.3, 30e-6),
        ],
    );
    println!("certified: {}", certify_network(&graph, 48.0, 45.6)?.pass);

    let init = initial_state(&graph, 48.0, InitialCondition::Equilibrium)?;
    let config = SimConfig {
        t_end: 3.0,
        max_step: 1e-5,
        sample_interval: 0.25,
        ..SimConfig::default()
    };
    let traj = simulate(&graph, &ControllerKind::Uncoordinated { c_u: 1.0 }, 48.0, &[], &config, &init)?;
    for s in &traj.samples {
        println!("t = {:4.2} s  V = {:.6e}  source voltages = {:.4} {:.4}", s.t, s.lyapunov, s.v[0], s.v[3]);
    }
    Ok(())
}
