//! Stability certificates.
//!
//! Two families of checks live here:
//!
//! * topology-free design rules on aggregate quantities (total load, total
//!   line resistance, worst droop resistance, per-load capacitance), which
//!   hold for every interconnection of units satisfying them;
//! * topology-aware conditions evaluated at a solved equilibrium: the
//!   co-content Hessian must be positive definite and every load capacitor
//!   must dominate `τ_max p_k / (v_k*)²`.
//!
//! The design rules are sufficient for all topologies and tight for the
//! single-source, single-load worst case.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{check_len, GridError, Result};
use crate::load_flow::{check_min_voltage, effective_impedance, solve_load_flow, LoadFlowOptions, SourceModel};
use crate::network::NetworkGraph;

/// Relative eigenvalue threshold for the positive definiteness test.
pub const PD_RELATIVE_THRESHOLD: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoadEnvelope {
    pub bus: usize,
    pub power: f64,
    pub capacitance: f64,
}

/// Aggregate bounds a designer commits to without knowing the topology.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignEnvelope {
    pub p_sigma: f64,
    pub r_sigma: f64,
    pub v_ref: f64,
    pub v_min: f64,
    pub r_max: f64,
    pub tau_max: f64,
    pub loads: Vec<LoadEnvelope>,
}

impl DesignEnvelope {
    /// Tightest envelope containing `graph`: the actual totals, the largest
    /// droop resistance and the largest line time constant.
    pub fn from_graph(graph: &NetworkGraph, v_ref: f64, v_min: f64) -> Result<Self> {
        let loads = graph
            .loads()
            .iter()
            .filter_map(|&k| {
                graph.load_params(k).map(|p| LoadEnvelope {
                    bus: k,
                    power: p.power,
                    capacitance: p.capacitance,
                })
            })
            .collect();
        let env = DesignEnvelope {
            p_sigma: graph.total_load_power(),
            r_sigma: graph.total_line_resistance(),
            v_ref,
            v_min,
            r_max: graph.droop_resistances().into_iter().fold(0.0, f64::max),
            tau_max: graph.tau_max()?,
            loads,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_min > 0.0 && self.v_min < self.v_ref) {
            return Err(GridError::param("v_min", "must satisfy 0 < v_min < v_ref"));
        }
        let positive = [
            ("r_sigma", self.r_sigma),
            ("r_max", self.r_max),
            ("tau_max", self.tau_max),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(GridError::param(name, "must be positive"));
            }
        }
        if !(self.p_sigma >= 0.0 && self.p_sigma.is_finite()) {
            return Err(GridError::param("p_sigma", "must be nonnegative"));
        }
        Ok(())
    }
}

/// One line of a certificate report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuleEntry {
    pub rule: String,
    pub pass: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`, in the units of the rule.
    pub margin: f64,
    pub units: &'static str,
}

impl RuleEntry {
    fn non_strict(rule: impl Into<String>, lhs: f64, rhs: f64, units: &'static str) -> Self {
        RuleEntry {
            rule: rule.into(),
            pass: lhs <= rhs,
            lhs,
            rhs,
            margin: rhs - lhs,
            units,
        }
    }

    fn strict(rule: impl Into<String>, lhs: f64, rhs: f64, units: &'static str) -> Self {
        RuleEntry {
            pass: lhs < rhs,
            ..RuleEntry::non_strict(rule, lhs, rhs, units)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateReport {
    pub pass: bool,
    pub entries: Vec<RuleEntry>,
}

impl CertificateReport {
    pub fn new(entries: Vec<RuleEntry>) -> Self {
        CertificateReport {
            pass: entries.iter().all(|e| e.pass),
            entries,
        }
    }

    pub fn entry(&self, rule: &str) -> Option<&RuleEntry> {
        self.entries.iter().find(|e| e.rule == rule)
    }
}

/// Load flow solvable for every topology: `p_Σ ≤ v_ref² / (4 R_Σ)`.
pub fn check_existence(env: &DesignEnvelope) -> RuleEntry {
    let rhs = env.v_ref * env.v_ref / (4.0 * env.r_sigma);
    RuleEntry::non_strict("existence", env.p_sigma, rhs, "W")
}

/// High-voltage solution above `v_min`: `p_Σ ≤ v_min (v_ref − v_min) / R_Σ`.
pub fn check_feasibility(env: &DesignEnvelope) -> RuleEntry {
    let rhs = env.v_min * (env.v_ref - env.v_min) / env.r_sigma;
    RuleEntry::non_strict("feasibility", env.p_sigma, rhs, "W")
}

/// Co-content convexity: `p_Σ ≤ v_min² / (R_Σ + r_max)`.
pub fn check_bm_convexity(env: &DesignEnvelope) -> RuleEntry {
    let rhs = env.v_min * env.v_min / (env.r_sigma + env.r_max);
    RuleEntry::non_strict("bm_convexity", env.p_sigma, rhs, "W")
}

/// Per-load capacitance rule `p_k < C_k v_min² / τ_max` (strict).
pub fn check_load_capacitances(env: &DesignEnvelope) -> Vec<RuleEntry> {
    env.loads
        .iter()
        .map(|l| {
            let rhs = l.capacitance * env.v_min * env.v_min / env.tau_max;
            RuleEntry::strict(format!("load_capacitance[{}]", l.bus), l.power, rhs, "W")
        })
        .collect()
}

/// All topology-free rules.
pub fn certify_envelope(env: &DesignEnvelope) -> CertificateReport {
    let mut entries = vec![check_existence(env), check_feasibility(env), check_bm_convexity(env)];
    entries.extend(check_load_capacitances(env));
    CertificateReport::new(entries)
}

/// `∇ᵀR⁻¹∇ + diag(1/r_k on sources) − diag(p_k/(v_k*)² on loads)`.
///
/// `droop` is in source order.
pub fn hessian_co_content(graph: &NetworkGraph, v_star: &[f64], droop: &[f64]) -> Result<DMatrix<f64>> {
    check_len("equilibrium voltages", graph.n(), v_star.len())?;
    check_len("droop resistances", graph.sources().len(), droop.len())?;
    let mut h = graph.laplacian()?;
    for (&k, &r) in graph.sources().iter().zip(droop) {
        h[(k, k)] += 1.0 / r;
    }
    for &k in graph.loads() {
        let v = v_star[k];
        if v <= 0.0 {
            return Err(GridError::NonPositiveVoltage { bus: k, voltage: v });
        }
        let p = graph.load_params(k).map_or(0.0, |l| l.power);
        h[(k, k)] -= p / (v * v);
    }
    Ok(h)
}

/// Extreme eigenvalues of a symmetric matrix, `(min, max)`.
pub fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// Hessian positive definiteness and the per-load `𝒬` condition at an
/// equilibrium.
pub fn check_topology_aware(graph: &NetworkGraph, v_star: &[f64], tau_max: f64) -> Result<Vec<RuleEntry>> {
    let h = hessian_co_content(graph, v_star, &graph.droop_resistances())?;
    let (lo, hi) = eigen_extremes(&h);
    let threshold = PD_RELATIVE_THRESHOLD * hi.abs();
    let mut entries = vec![RuleEntry::strict("hessian_pd", threshold, lo, "S")];
    for &k in graph.loads() {
        let (p, c) = graph.load_params(k).map_or((0.0, 0.0), |l| (l.power, l.capacitance));
        let v = v_star[k];
        entries.push(RuleEntry::strict(format!("q_load[{k}]"), tau_max * p / (v * v), c, "F"));
    }
    Ok(entries)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkCertificate {
    pub envelope: DesignEnvelope,
    pub design_rules: CertificateReport,
    pub load_flow_converged: bool,
    pub equilibrium_voltages: Vec<f64>,
    pub topology_aware: CertificateReport,
    /// Worst diagonal effective resistance between a load and the sources.
    pub z_inf_star: Option<f64>,
    /// Induced ∞-norm of the effective impedance matrix.
    pub z_row_sum_norm: Option<f64>,
    pub pass: bool,
}

/// Design rules on the tightest envelope of `graph`, then the
/// topology-aware checks at its pinned-source equilibrium.
///
/// A load flow that does not converge shows up as a failed `load_flow`
/// entry; the Hessian and `𝒬` checks are then skipped.
pub fn certify_network(graph: &NetworkGraph, v_ref: f64, v_min: f64) -> Result<NetworkCertificate> {
    graph.ensure_valid()?;
    let envelope = DesignEnvelope::from_graph(graph, v_ref, v_min)?;
    let design_rules = certify_envelope(&envelope);

    let sol = solve_load_flow(graph, v_ref, &SourceModel::Pinned, LoadFlowOptions::default())?;
    let mut entries = vec![RuleEntry {
        rule: "load_flow".into(),
        pass: sol.converged,
        lhs: sol.residual_norm,
        rhs: sol.tolerance,
        margin: sol.tolerance - sol.residual_norm,
        units: "W",
    }];
    if sol.converged {
        let mv = check_min_voltage(graph, &sol, v_min);
        if let Some(worst) = mv.worst_voltage {
            entries.push(RuleEntry::strict("min_voltage", v_min, worst, "V"));
        }
        entries.extend(check_topology_aware(graph, &sol.v_star, envelope.tau_max)?);
    }
    let topology_aware = CertificateReport::new(entries);

    let z = if graph.loads().is_empty() {
        None
    } else {
        Some(effective_impedance(graph)?)
    };
    Ok(NetworkCertificate {
        pass: design_rules.pass && topology_aware.pass,
        envelope,
        design_rules,
        load_flow_converged: sol.converged,
        equilibrium_voltages: sol.v_star,
        topology_aware,
        z_inf_star: z.as_ref().map(|z| z.z_inf_star),
        z_row_sum_norm: z.as_ref().map(|z| z.row_sum_norm),
    })
}
