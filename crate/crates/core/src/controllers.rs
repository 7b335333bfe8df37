//! Source control laws.
//!
//! Every law sees the exact, current voltage and power of every source
//! (ideal synchronous measurement sharing, no delay).

use serde::{Deserialize, Serialize};

use crate::error::{check_len, GridError, Result};
use crate::network::NetworkGraph;
use crate::potentials::SystemState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerKind {
    /// Fixed setpoints `u_k = v_ref`.
    DroopOnly,
    /// `C_u u̇_k = (v_ref − v_k) / r_k` at every source independently.
    Uncoordinated {
        #[serde(default = "default_c_u")]
        c_u: f64,
    },
    /// Shared PI restoration of the mean source voltage.
    StandardSecondary { k_p: f64, k_i: f64 },
    /// Integral control of voltage and power sharing errors together.
    Multipurpose {
        k_v: f64,
        k_lambda: f64,
        lambda: Vec<f64>,
    },
}

fn default_c_u() -> f64 {
    1.0
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::DroopOnly => "droop_only",
            ControllerKind::Uncoordinated { .. } => "uncoordinated",
            ControllerKind::StandardSecondary { .. } => "standard_secondary",
            ControllerKind::Multipurpose { .. } => "multipurpose",
        }
    }

    /// True when the setpoints are integrated states of their own.
    pub fn is_differential(&self) -> bool {
        matches!(self, ControllerKind::Uncoordinated { .. } | ControllerKind::Multipurpose { .. })
    }

    pub fn validate(&self, n_sources: usize) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(GridError::param(name, "must be positive"))
            }
        };
        match self {
            ControllerKind::DroopOnly => Ok(()),
            ControllerKind::Uncoordinated { c_u } => positive("c_u", *c_u),
            ControllerKind::StandardSecondary { k_p, k_i } => {
                if !(*k_p >= 0.0 && k_p.is_finite()) {
                    return Err(GridError::param("k_p", "must be nonnegative"));
                }
                positive("k_i", *k_i)
            }
            ControllerKind::Multipurpose { k_v, k_lambda, lambda } => {
                positive("k_v", *k_v)?;
                positive("k_lambda", *k_lambda)?;
                check_len("participation factors", n_sources, lambda.len())?;
                lambda.iter().try_for_each(|&l| positive("lambda", l))
            }
        }
    }

    /// Warns when `Σλ_k ≠ n_s`, in which case the voltage and sharing
    /// objectives cannot both hold.
    pub fn lambda_warning(&self) -> Option<String> {
        match self {
            ControllerKind::Multipurpose { lambda, .. } => {
                let sum: f64 = lambda.iter().sum();
                let n = lambda.len() as f64;
                ((sum - n).abs() > 1e-9 * n).then(|| {
                    format!("participation factors sum to {sum}, not {n}; objectives may be jointly unsatisfiable")
                })
            }
            _ => None,
        }
    }
}

/// Voltage and injected power of every source, in source order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourceMeasurements {
    pub voltages: Vec<f64>,
    pub powers: Vec<f64>,
}

impl SourceMeasurements {
    pub fn new(voltages: Vec<f64>, powers: Vec<f64>) -> Result<Self> {
        check_len("source powers", voltages.len(), powers.len())?;
        Ok(SourceMeasurements { voltages, powers })
    }

    pub fn from_state(graph: &NetworkGraph, state: &SystemState) -> Result<Self> {
        let powers = source_power(graph, state)?;
        let voltages = graph.sources().iter().map(|&k| state.v[k]).collect();
        Ok(SourceMeasurements { voltages, powers })
    }

    pub fn v_bar(&self) -> f64 {
        mean(&self.voltages)
    }

    pub fn p_bar(&self) -> f64 {
        mean(&self.powers)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Power each source injects at its bus, `P_k = v_k (∇ᵀi)_k`.
pub fn source_power(graph: &NetworkGraph, state: &SystemState) -> Result<Vec<f64>> {
    state.check(graph)?;
    let out = graph.incidence_transpose_apply(&state.i)?;
    Ok(graph.sources().iter().map(|&k| state.v[k] * out[k]).collect())
}

/// Setpoint rates `u̇` of the differential controllers.
pub fn control_derivative(
    kind: &ControllerKind,
    graph: &NetworkGraph,
    meas: &SourceMeasurements,
    v_ref: f64,
) -> Result<Vec<f64>> {
    check_len("source measurements", graph.sources().len(), meas.voltages.len())?;
    match kind {
        ControllerKind::Uncoordinated { c_u } => Ok(graph
            .sources()
            .iter()
            .zip(&meas.voltages)
            .map(|(&k, &v)| {
                let r = graph.source_params(k).map_or(1.0, |s| s.droop_resistance);
                (v_ref - v) / (c_u * r)
            })
            .collect()),
        ControllerKind::Multipurpose { k_v, k_lambda, lambda } => {
            check_len("participation factors", meas.powers.len(), lambda.len())?;
            let voltage_term = k_v * (v_ref - meas.v_bar());
            let p_bar = meas.p_bar();
            Ok(lambda
                .iter()
                .zip(&meas.powers)
                .map(|(l, p)| voltage_term + k_lambda * (l * p_bar - p))
                .collect())
        }
        _ => Err(GridError::WrongControllerKind {
            kind: kind.name(),
            what: "a setpoint derivative",
        }),
    }
}

/// Setpoints of the algebraic controllers given the running integral
/// `∫(v_ref − v̄)dt` (ignored for droop-only).
pub fn control_setpoint(kind: &ControllerKind, meas: &SourceMeasurements, integral: f64, v_ref: f64) -> Result<Vec<f64>> {
    let n = meas.voltages.len();
    match kind {
        ControllerKind::DroopOnly => Ok(vec![v_ref; n]),
        ControllerKind::StandardSecondary { k_p, k_i } => {
            let u = v_ref + k_p * (v_ref - meas.v_bar()) + k_i * integral;
            Ok(vec![u; n])
        }
        _ => Err(GridError::WrongControllerKind {
            kind: kind.name(),
            what: "an algebraic setpoint",
        }),
    }
}

/// Common setpoint of the standard secondary controller with the
/// proportional loop closed.
///
/// With `v_k = u − r_k (∇ᵀi)_k` and `d = mean_k r_k (∇ᵀi)_k`, the mean source
/// voltage is `v̄ = u − d`, and `u = v_ref + k_p (v_ref − v̄) + k_i ξ` solves to
/// `u = v_ref + (k_p d + k_i ξ) / (1 + k_p)`.
pub fn standard_setpoint_closed_loop(k_p: f64, k_i: f64, integral: f64, mean_droop_drop: f64, v_ref: f64) -> f64 {
    v_ref + (k_p * mean_droop_drop + k_i * integral) / (1.0 + k_p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    Approximate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SteadyStateTargets {
    pub sharing: Exactness,
    pub voltage: Exactness,
}

/// Which objectives each strategy meets exactly at steady state.
pub fn steady_state_targets(kind: &ControllerKind) -> SteadyStateTargets {
    use Exactness::*;
    match kind {
        ControllerKind::Multipurpose { .. } => SteadyStateTargets {
            sharing: Exact,
            voltage: Exact,
        },
        ControllerKind::StandardSecondary { .. } | ControllerKind::Uncoordinated { .. } => SteadyStateTargets {
            sharing: Approximate,
            voltage: Exact,
        },
        ControllerKind::DroopOnly => SteadyStateTargets {
            sharing: Approximate,
            voltage: Approximate,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Bus, LineParams};

    fn three_sources() -> NetworkGraph {
        NetworkGraph::new(
            vec![
                Bus::source(0.5, 48.0),
                Bus::source(0.5, 48.0),
                Bus::source(0.5, 48.0),
                Bus::load(30.0, 1e-3),
            ],
            vec![
                LineParams::new(0, 3, 0.1, 1e-6),
                LineParams::new(1, 3, 0.1, 1e-6),
                LineParams::new(2, 3, 0.1, 1e-6),
            ],
        )
    }

    fn multipurpose(lambda: Vec<f64>) -> ControllerKind {
        ControllerKind::Multipurpose {
            k_v: 36.04,
            k_lambda: 0.7508,
            lambda,
        }
    }

    #[test]
    fn multipurpose_fixed_point() {
        let g = three_sources();
        let meas = SourceMeasurements::new(vec![48.0; 3], vec![20.0; 3]).unwrap();
        let du = control_derivative(&multipurpose(vec![1.0; 3]), &g, &meas, 48.0).unwrap();
        assert!(du.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn multipurpose_sharing_error() {
        let g = three_sources();
        let meas = SourceMeasurements::new(vec![48.0; 3], vec![10.0, 20.0, 30.0]).unwrap();
        let du = control_derivative(&multipurpose(vec![1.0; 3]), &g, &meas, 48.0).unwrap();
        let expected = [7.508, 0.0, -7.508];
        for (d, e) in du.iter().zip(expected) {
            assert!((d - e).abs() < 1e-12, "{du:?}");
        }
    }

    #[test]
    fn uncoordinated_rest() {
        let g = three_sources();
        let meas = SourceMeasurements::new(vec![48.0; 3], vec![1.0, 2.0, 3.0]).unwrap();
        let du = control_derivative(&ControllerKind::Uncoordinated { c_u: 1.0 }, &g, &meas, 48.0).unwrap();
        assert_eq!(du, vec![0.0; 3]);

        let meas = SourceMeasurements::new(vec![47.0, 48.0, 49.0], vec![0.0; 3]).unwrap();
        let du = control_derivative(&ControllerKind::Uncoordinated { c_u: 0.5 }, &g, &meas, 48.0).unwrap();
        assert_eq!(du, vec![4.0, 0.0, -4.0]);
    }

    #[test]
    fn algebraic_kinds_reject_derivative() {
        let g = three_sources();
        let meas = SourceMeasurements::new(vec![48.0; 3], vec![0.0; 3]).unwrap();
        assert!(matches!(
            control_derivative(&ControllerKind::DroopOnly, &g, &meas, 48.0),
            Err(GridError::WrongControllerKind { .. })
        ));
        assert!(control_setpoint(&multipurpose(vec![1.0; 3]), &meas, 0.0, 48.0).is_err());
    }

    #[test]
    fn setpoints() {
        let meas = SourceMeasurements::new(vec![48.0; 3], vec![0.0; 3]).unwrap();
        let std = ControllerKind::StandardSecondary { k_p: 0.0, k_i: 18.02 };
        assert_eq!(control_setpoint(&std, &meas, 0.0, 48.0).unwrap(), vec![48.0; 3]);
        assert_eq!(control_setpoint(&ControllerKind::DroopOnly, &meas, 5.0, 48.0).unwrap(), vec![48.0; 3]);
        let u = control_setpoint(&std, &meas, 0.1, 48.0).unwrap();
        for x in u {
            assert!((x - 49.802).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_loop_setpoint_is_consistent() {
        let (k_p, k_i, xi, d, v_ref) = (0.7, 18.02, 0.03, 0.4, 48.0);
        let u = standard_setpoint_closed_loop(k_p, k_i, xi, d, v_ref);
        let v_bar = u - d;
        assert!((u - (v_ref + k_p * (v_ref - v_bar) + k_i * xi)).abs() < 1e-12);
    }

    #[test]
    fn targets() {
        use Exactness::*;
        let t = steady_state_targets(&multipurpose(vec![1.0; 3]));
        assert_eq!((t.sharing, t.voltage), (Exact, Exact));
        let t = steady_state_targets(&ControllerKind::StandardSecondary { k_p: 0.0, k_i: 1.0 });
        assert_eq!((t.sharing, t.voltage), (Approximate, Exact));
        let t = steady_state_targets(&ControllerKind::DroopOnly);
        assert_eq!((t.sharing, t.voltage), (Approximate, Approximate));
    }

    #[test]
    fn source_power_single_edge() {
        let g = NetworkGraph::new(
            vec![Bus::source(0.5, 48.0), Bus::load(1.0, 1e-3)],
            vec![LineParams::new(0, 1, 0.1, 1e-6)],
        );
        let s = SystemState {
            i: vec![0.0],
            v: vec![48.0, 47.0],
            u: vec![48.0],
        };
        assert_eq!(source_power(&g, &s).unwrap(), vec![0.0]);
        let s = SystemState { i: vec![2.5], ..s };
        assert_eq!(source_power(&g, &s).unwrap(), vec![120.0]);
    }

    #[test]
    fn validation() {
        assert!(multipurpose(vec![1.0; 2]).validate(3).is_err());
        assert!(multipurpose(vec![1.0, 0.0, 1.0]).validate(3).is_err());
        assert!(multipurpose(vec![1.0; 3]).validate(3).is_ok());
        assert!(ControllerKind::StandardSecondary { k_p: 0.0, k_i: 1.0 }.validate(3).is_ok());
        assert!(ControllerKind::StandardSecondary { k_p: -1.0, k_i: 1.0 }.validate(3).is_err());
        assert!(multipurpose(vec![1.5, 0.75, 0.75]).lambda_warning().is_none());
        assert!(multipurpose(vec![2.0, 1.0, 1.0]).lambda_warning().is_some());
    }
}
