//! Finite differences of the mixed potential against the circuit laws:
//! the current gradient is `L di/dt` and the voltage gradient is `−C dv/dt`.

use adhocgrid::network::{Bus, LineParams, NetworkGraph};
use adhocgrid::potentials::{bm_potential_p0, circuit_rhs, SystemState};

fn main() -> adhocgrid::Result<()> {
    let graph = NetworkGraph::new(
        vec![Bus::source(0.5, 48.0), Bus::load(35.11, 845.7e-6), Bus::load(20.0, 845.7e-6)],
        vec![
            LineParams::with_time_constant(0, 1, 0.111, 55.45e-6),
            LineParams::with_time_constant(1, 2, 0.2, 55.45e-6),
        ],
    );
    let state = SystemState {
        i: vec![1.3, -0.4],
        v: vec![47.6, 46.9, 47.2],
        u: vec![48.3],
    };
    let (l_di, c_dv) = circuit_rhs(&graph, &state)?;
    let h = 1e-4;
    let p0 = |s: &SystemState| bm_potential_p0(&graph, s, 48.0);
    for (a, expected) in l_di.iter().enumerate() {
        let (mut hi, mut lo) = (state.clone(), state.clone());
        hi.i[a] += h;
        lo.i[a] -= h;
        let fd = (p0(&hi)? - p0(&lo)?) / (2.0 * h);
        println!("dP0/di[{a}] = {fd:+.9}   L di/dt = {expected:+.9}");
    }
    for (k, c) in c_dv.iter().enumerate() {
        let (mut hi, mut lo) = (state.clone(), state.clone());
        hi.v[k] += h;
        lo.v[k] -= h;
        let fd = (p0(&hi)? - p0(&lo)?) / (2.0 * h);
        println!("dP0/dv[{k}] = {fd:+.9}  -C dv/dt = {:+.9}", -c);
    }
    Ok(())
}
