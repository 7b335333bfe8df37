//! Brayton–Moser potentials and the Lyapunov function built from them.
//!
//! With `x = (i, v)`, the circuit obeys the quasi-gradient law
//! `diag(−L, C) ẋ = −∂ₓ𝒫₀`. The modified potential `𝒫` and its matrix `𝒬`
//! give the Lyapunov function `V = ẋᵀ𝒬ẋ + C_u u̇ᵀu̇`. `V` carries no
//! physical unit; only its sign and monotonicity are meaningful.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, GridError, Result};
use crate::network::NetworkGraph;

/// Line currents, bus voltages and source setpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    /// Edge vector, amperes.
    pub i: Vec<f64>,
    /// Node vector over all buses, volts.
    pub v: Vec<f64>,
    /// Source setpoints in source order, volts.
    pub u: Vec<f64>,
}

impl SystemState {
    pub fn check(&self, graph: &NetworkGraph) -> Result<()> {
        check_len("line currents", graph.m(), self.i.len())?;
        check_len("bus voltages", graph.n(), self.v.len())?;
        check_len("source setpoints", graph.sources().len(), self.u.len())
    }
}

/// Time derivative of a [`SystemState`]. Source-bus entries of `dv` follow
/// the algebraic limit `dv_k = du_k − r_k (∇ᵀ di)_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDerivative {
    pub di: Vec<f64>,
    pub dv: Vec<f64>,
    pub du: Vec<f64>,
}

impl StateDerivative {
    pub fn check(&self, graph: &NetworkGraph) -> Result<()> {
        check_len("current derivatives", graph.m(), self.di.len())?;
        check_len("voltage derivatives", graph.n(), self.dv.len())?;
        check_len("setpoint derivatives", graph.sources().len(), self.du.len())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |x: &Vec<f64>| x.iter().map(|v| v * factor).collect();
        StateDerivative {
            di: s(&self.di),
            dv: s(&self.dv),
            du: s(&self.du),
        }
    }
}

fn check_load_voltages(graph: &NetworkGraph, v: &[f64]) -> Result<()> {
    for &k in graph.loads() {
        if !(v[k] > 0.0) {
            return Err(GridError::NonPositiveVoltage { bus: k, voltage: v[k] });
        }
    }
    Ok(())
}

/// `ℛ₀ = ½ iᵀRi`.
pub fn resistive_content(graph: &NetworkGraph, i: &[f64]) -> Result<f64> {
    check_len("line currents", graph.m(), i.len())?;
    Ok(0.5 * graph.lines().iter().zip(i).map(|(l, x)| l.resistance * x * x).sum::<f64>())
}

/// `𝒢₀ = Σ_loads p_k ln v_k + Σ_sources [v_k²/2 + (v_ref − v_k) u_k] / r_k`.
pub fn resistive_co_content(graph: &NetworkGraph, v: &[f64], u: &[f64], v_ref: f64) -> Result<f64> {
    check_len("bus voltages", graph.n(), v.len())?;
    check_len("source setpoints", graph.sources().len(), u.len())?;
    check_load_voltages(graph, v)?;
    let loads: f64 = graph
        .loads()
        .iter()
        .map(|&k| graph.load_params(k).map_or(0.0, |l| l.power) * v[k].ln())
        .sum();
    let sources: f64 = graph
        .sources()
        .iter()
        .zip(u)
        .map(|(&k, &uk)| {
            let r = graph.source_params(k).map_or(1.0, |s| s.droop_resistance);
            (0.5 * v[k] * v[k] + (v_ref - v[k]) * uk) / r
        })
        .sum();
    Ok(loads + sources)
}

/// `𝒫₀ = 𝒢₀ − ℛ₀ + iᵀ∇v`.
pub fn bm_potential_p0(graph: &NetworkGraph, state: &SystemState, v_ref: f64) -> Result<f64> {
    state.check(graph)?;
    let g0 = resistive_co_content(graph, &state.v, &state.u, v_ref)?;
    let r0 = resistive_content(graph, &state.i)?;
    let drops = graph.incidence_apply(&state.v)?;
    let coupling: f64 = state.i.iter().zip(&drops).map(|(a, b)| a * b).sum();
    Ok(g0 - r0 + coupling)
}

/// Right-hand sides of the circuit laws with a capacitor on every bus:
/// `L di = −Ri + ∇v` and `C dv = −p/v − ∇ᵀi` on loads,
/// `C dv = (u − v)/r − ∇ᵀi` on sources.
///
/// Returned as `(L di, C dv)`; the quasi-gradient identity says these equal
/// `∂ᵢ𝒫₀` and `−∂ᵥ𝒫₀`.
pub fn circuit_rhs(graph: &NetworkGraph, state: &SystemState) -> Result<(Vec<f64>, Vec<f64>)> {
    state.check(graph)?;
    check_load_voltages(graph, &state.v)?;
    let drops = graph.incidence_apply(&state.v)?;
    let l_di = graph
        .lines()
        .iter()
        .zip(&state.i)
        .zip(&drops)
        .map(|((l, i), d)| -l.resistance * i + d)
        .collect();
    let out = graph.incidence_transpose_apply(&state.i)?;
    let mut c_dv: Vec<f64> = out.iter().map(|o| -o).collect();
    for &k in graph.loads() {
        c_dv[k] -= graph.load_params(k).map_or(0.0, |l| l.power) / state.v[k];
    }
    for (&k, &u) in graph.sources().iter().zip(&state.u) {
        let r = graph.source_params(k).map_or(1.0, |s| s.droop_resistance);
        c_dv[k] += (u - state.v[k]) / r;
    }
    Ok((l_di, c_dv))
}

/// `𝒢 = ½ vᵀ∇ᵀR⁻¹∇v + 𝒢₀`.
pub fn co_content_g(graph: &NetworkGraph, v: &[f64], u: &[f64], v_ref: f64) -> Result<f64> {
    let g0 = resistive_co_content(graph, v, u, v_ref)?;
    let drops = graph.incidence_apply(v)?;
    let lap: f64 = graph.lines().iter().zip(&drops).map(|(l, d)| d * d / l.resistance).sum();
    Ok(0.5 * lap + g0)
}

/// `𝒫 = ½ i̇ᵀ[τ_max L − LR⁻¹L] i̇ + (τ_max/2) v̇ᵀCv̇ + 𝒢`, with the
/// capacitive term summed over load buses only.
pub fn bm_potential_p(
    graph: &NetworkGraph,
    state: &SystemState,
    deriv: &StateDerivative,
    v_ref: f64,
    tau_max: f64,
) -> Result<f64> {
    state.check(graph)?;
    deriv.check(graph)?;
    let inductive: f64 = graph
        .lines()
        .iter()
        .zip(&deriv.di)
        .map(|(l, d)| l.inductance * (tau_max - l.time_constant()) * d * d)
        .sum();
    let capacitive: f64 = graph
        .loads()
        .iter()
        .map(|&k| graph.load_params(k).map_or(0.0, |l| l.capacitance) * deriv.dv[k] * deriv.dv[k])
        .sum();
    Ok(0.5 * inductive + 0.5 * tau_max * capacitive + co_content_g(graph, &state.v, &state.u, v_ref)?)
}

/// Diagonal of `∂ᵥᵥ𝒢₀`: `−p_k/v_k²` on loads, `1/r_k` on sources.
pub fn co_content_curvature(graph: &NetworkGraph, v: &[f64]) -> Result<Vec<f64>> {
    check_len("bus voltages", graph.n(), v.len())?;
    check_load_voltages(graph, v)?;
    let mut d = vec![0.0; graph.n()];
    for &k in graph.loads() {
        d[k] = -graph.load_params(k).map_or(0.0, |l| l.power) / (v[k] * v[k]);
    }
    for &k in graph.sources() {
        d[k] = 1.0 / graph.source_params(k).map_or(1.0, |s| s.droop_resistance);
    }
    Ok(d)
}

/// `𝒬 = τ_max [[R − L/τ_max, −∇], [∇ᵀ, ∂ᵥᵥ𝒢₀ + C/τ_max]]`, order `m + n`.
pub fn q_matrix(graph: &NetworkGraph, v: &[f64], tau_max: f64) -> Result<DMatrix<f64>> {
    let (m, n) = (graph.m(), graph.n());
    let curvature = co_content_curvature(graph, v)?;
    let caps = graph.capacitances();
    let mut q = DMatrix::zeros(m + n, m + n);
    for (a, l) in graph.lines().iter().enumerate() {
        q[(a, a)] = tau_max * l.resistance - l.inductance;
        q[(a, m + l.from)] -= tau_max;
        q[(a, m + l.to)] += tau_max;
        q[(m + l.from, a)] += tau_max;
        q[(m + l.to, a)] -= tau_max;
    }
    for k in 0..n {
        q[(m + k, m + k)] = tau_max * curvature[k] + caps[k];
    }
    Ok(q)
}

fn stacked(deriv: &StateDerivative) -> DVector<f64> {
    DVector::from_iterator(
        deriv.di.len() + deriv.dv.len(),
        deriv.di.iter().chain(&deriv.dv).copied(),
    )
}

/// `V = ẋᵀ𝒬ẋ + C_u u̇ᵀu̇`, evaluated through the assembled `𝒬`.
pub fn lyapunov_v(
    graph: &NetworkGraph,
    state: &SystemState,
    deriv: &StateDerivative,
    tau_max: f64,
    c_u: f64,
) -> Result<f64> {
    state.check(graph)?;
    deriv.check(graph)?;
    let q = q_matrix(graph, &state.v, tau_max)?;
    let x = stacked(deriv);
    let quad = x.dot(&(&q * &x));
    Ok(quad + c_u * deriv.du.iter().map(|d| d * d).sum::<f64>())
}

/// Same value as [`lyapunov_v`], evaluated from the diagonal blocks alone;
/// the antisymmetric coupling blocks of `𝒬` drop out of the quadratic form.
pub fn lyapunov_v_diagonal(
    graph: &NetworkGraph,
    state: &SystemState,
    deriv: &StateDerivative,
    tau_max: f64,
    c_u: f64,
) -> Result<f64> {
    state.check(graph)?;
    deriv.check(graph)?;
    let curvature = co_content_curvature(graph, &state.v)?;
    let caps = graph.capacitances();
    let lines: f64 = graph
        .lines()
        .iter()
        .zip(&deriv.di)
        .map(|(l, d)| (tau_max * l.resistance - l.inductance) * d * d)
        .sum();
    let buses: f64 = (0..graph.n())
        .map(|k| (tau_max * curvature[k] + caps[k]) * deriv.dv[k] * deriv.dv[k])
        .sum();
    Ok(lines + buses + c_u * deriv.du.iter().map(|d| d * d).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Bus, LineParams};

    const TAU: f64 = 55.45e-6;

    fn two_bus(p: f64) -> NetworkGraph {
        NetworkGraph::new(
            vec![Bus::source(0.5, 48.0), Bus::load(p, 845.7e-6)],
            vec![LineParams::with_time_constant(0, 1, 0.111, TAU)],
        )
    }

    #[test]
    fn content_values() {
        let g = two_bus(35.11);
        assert_eq!(resistive_content(&g, &[0.0]).unwrap(), 0.0);
        assert!((resistive_content(&g, &[2.0]).unwrap() - 0.222).abs() < 1e-15);
        let a = resistive_content(&g, &[1.3]).unwrap();
        let b = resistive_content(&g, &[2.6]).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-14);
    }

    #[test]
    fn co_content_values() {
        let g = two_bus(0.0);
        let g0 = resistive_co_content(&g, &[48.0, 48.0], &[48.0], 48.0).unwrap();
        assert!((g0 - 48.0 * 48.0 / (2.0 * 0.5)).abs() < 1e-12);

        let loads_only = NetworkGraph::new(
            vec![Bus::load(35.11, 1e-3), Bus::source(0.5, 48.0)],
            vec![LineParams::new(0, 1, 0.1, 1e-6)],
        );
        let with_source = resistive_co_content(&loads_only, &[48.0, 0.0], &[48.0], 48.0).unwrap();
        let load_term = 35.11 * 48.0f64.ln();
        assert!((load_term - 135.92).abs() < 0.01);
        assert!((with_source - load_term - 48.0 * 48.0 / 0.5).abs() < 1e-9);

        assert!(matches!(
            resistive_co_content(&g, &[48.0, -1.0], &[48.0], 48.0),
            Err(GridError::NonPositiveVoltage { bus: 1, .. })
        ));
    }

    #[test]
    fn co_content_load_derivative() {
        let g = two_bus(35.11);
        let v = 47.3;
        let h = 1e-6 * v;
        let f = |x: f64| resistive_co_content(&g, &[48.0, x], &[48.0], 48.0).unwrap();
        let fd = (f(v + h) - f(v - h)) / (2.0 * h);
        assert!((fd - 35.11 / v).abs() / (35.11 / v) < 1e-7);
    }

    #[test]
    fn p0_reduces_to_g0_without_current() {
        let g = two_bus(35.11);
        let s = SystemState {
            i: vec![0.0],
            v: vec![48.0, 48.0],
            u: vec![48.0],
        };
        let p0 = bm_potential_p0(&g, &s, 48.0).unwrap();
        let g0 = resistive_co_content(&g, &s.v, &s.u, 48.0).unwrap();
        assert!((p0 - g0).abs() < 1e-12);
    }

    #[test]
    fn p0_is_stationary_in_current_at_ohmic_flow() {
        let g = two_bus(35.11);
        let v = vec![48.0, 47.5];
        let i_eq = 0.5 / 0.111;
        let s = SystemState {
            i: vec![i_eq],
            v,
            u: vec![48.0],
        };
        let (l_di, _) = circuit_rhs(&g, &s).unwrap();
        assert!(l_di[0].abs() < 1e-12);
        let h = 1e-6 * i_eq;
        let f = |x: f64| {
            let mut t = s.clone();
            t.i[0] = x;
            bm_potential_p0(&g, &t, 48.0).unwrap()
        };
        assert!(((f(i_eq + h) - f(i_eq - h)) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn g_on_constant_voltage_is_g0() {
        let g = two_bus(35.11);
        let v = [48.0, 48.0];
        assert_eq!(
            co_content_g(&g, &v, &[48.0], 48.0).unwrap(),
            resistive_co_content(&g, &v, &[48.0], 48.0).unwrap()
        );
        let v = [48.0, 47.0];
        let lap = co_content_g(&g, &v, &[48.0], 48.0).unwrap() - resistive_co_content(&g, &v, &[48.0], 48.0).unwrap();
        assert!((lap - 4.5045).abs() < 1e-4);
    }

    #[test]
    fn p_at_rest_equals_g() {
        let g = two_bus(35.11);
        let s = SystemState {
            i: vec![1.0],
            v: vec![48.0, 47.9],
            u: vec![48.5],
        };
        let zero = StateDerivative {
            di: vec![0.0],
            dv: vec![0.0, 0.0],
            du: vec![0.0],
        };
        let p = bm_potential_p(&g, &s, &zero, 48.0, TAU).unwrap();
        assert_eq!(p, co_content_g(&g, &s.v, &s.u, 48.0).unwrap());
    }

    #[test]
    fn p_inductive_term_vanishes_for_uniform_tau() {
        let g = two_bus(35.11);
        let s = SystemState {
            i: vec![1.0],
            v: vec![48.0, 47.9],
            u: vec![48.5],
        };
        let d = StateDerivative {
            di: vec![1e3],
            dv: vec![3.0, 2.0],
            du: vec![0.1],
        };
        let p = bm_potential_p(&g, &s, &d, 48.0, TAU).unwrap();
        let expected = 0.5 * TAU * 845.7e-6 * 4.0 + co_content_g(&g, &s.v, &s.u, 48.0).unwrap();
        assert!((p - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn p_inductive_term_for_mixed_tau() {
        let g = NetworkGraph::new(
            vec![Bus::source(0.5, 48.0), Bus::load(1.0, 1e-3), Bus::load(1.0, 1e-3)],
            vec![
                LineParams::with_time_constant(0, 1, 0.2, 10e-6),
                LineParams::with_time_constant(1, 2, 0.1, 40e-6),
            ],
        );
        let s = SystemState {
            i: vec![0.0, 0.0],
            v: vec![48.0, 48.0, 48.0],
            u: vec![48.0],
        };
        let d = StateDerivative {
            di: vec![2.0, 3.0],
            dv: vec![0.0; 3],
            du: vec![0.0],
        };
        let tau = g.tau_max().unwrap();
        let p = bm_potential_p(&g, &s, &d, 48.0, tau).unwrap() - co_content_g(&g, &s.v, &s.u, 48.0).unwrap();
        let l0 = 0.2 * 10e-6;
        let expected = 0.5 * (l0 * (tau - 10e-6) * 4.0);
        // 𝒢 is about 2e3, so the difference carries its rounding.
        assert!((p - expected).abs() < 1e-11, "{p} vs {expected}");
    }

    #[test]
    fn q_matrix_structure() {
        let g = two_bus(35.11);
        let v = [48.0, 47.9];
        let q = q_matrix(&g, &v, TAU).unwrap();
        assert_eq!(q.nrows(), 3);
        // Uniform τ: line block τR − L vanishes.
        assert!(q[(0, 0)].abs() < 1e-18);
        assert_eq!(q[(0, 1)], -TAU);
        assert_eq!(q[(1, 0)], TAU);
        assert_eq!(q[(0, 2)], TAU);
        assert_eq!(q[(2, 0)], -TAU);
        assert!((q[(1, 1)] - TAU / 0.5).abs() < 1e-18);
        let load_diag = 845.7e-6 - TAU * 35.11 / (47.9 * 47.9);
        assert!((q[(2, 2)] - load_diag).abs() < 1e-18);
    }

    #[test]
    fn q_symmetric_part_psd_tracks_capacitance_rule() {
        let v = [48.0, 47.9];
        let threshold = TAU * 35.11 / (47.9 * 47.9);
        let sym_min_eig = |c: f64| {
            let g = NetworkGraph::new(
                vec![Bus::source(0.5, 48.0), Bus::load(35.11, c)],
                vec![LineParams::with_time_constant(0, 1, 0.111, TAU)],
            );
            let q = q_matrix(&g, &v, TAU).unwrap();
            let sym = (&q + q.transpose()) * 0.5;
            crate::certificates::eigen_extremes(&sym).0
        };
        assert!(sym_min_eig(2.0 * threshold) >= -1e-18);
        assert!(sym_min_eig(0.5 * threshold) < 0.0);
    }

    #[test]
    fn lyapunov_paths_agree_and_scale() {
        let g = two_bus(35.11);
        let s = SystemState {
            i: vec![1.0],
            v: vec![48.0, 47.9],
            u: vec![48.5],
        };
        let d = StateDerivative {
            di: vec![250.0],
            dv: vec![-3.0, 2.0],
            du: vec![0.7],
        };
        let a = lyapunov_v(&g, &s, &d, TAU, 1.0).unwrap();
        let b = lyapunov_v_diagonal(&g, &s, &d, TAU, 1.0).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs());
        let a2 = lyapunov_v(&g, &s, &d.scaled(2.0), TAU, 1.0).unwrap();
        assert!((a2 - 4.0 * a).abs() <= 1e-12 * a2.abs());
        let zero = d.scaled(0.0);
        assert_eq!(lyapunov_v(&g, &s, &zero, TAU, 1.0).unwrap(), 0.0);
    }
}
