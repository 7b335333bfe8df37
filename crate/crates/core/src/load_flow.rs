//! Equilibrium (load-flow) solver and effective impedance.
//!
//! At equilibrium every line carries `i = R⁻¹∇v` and every constant power
//! load satisfies `p_k = −v_k (∇ᵀR⁻¹∇v)_k`. Source buses are closed either by
//! pinning their voltage at `v_ref` (converged secondary control), by the
//! droop law with a fixed internal setpoint, or by a common setpoint chosen
//! so that the mean source voltage equals `v_ref`.
//!
//! The solver is a damped Newton iteration started from `v = v_ref·1`, which
//! lands on the high-voltage branch whenever it exists.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_len, GridError, Result};
use crate::network::NetworkGraph;

/// How source buses are closed in the equilibrium equations.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceModel {
    /// Source voltages fixed at `v_ref`.
    Pinned,
    /// `v_k = u_k − r_k (∇ᵀi)_k` with the given setpoints, in source order.
    Droop(Vec<f64>),
    /// Droop law with one setpoint shared by all sources, solved together
    /// with the condition `mean(v_sources) = v_ref`.
    CommonSetpoint,
}

impl SourceModel {
    fn name(&self) -> &'static str {
        match self {
            SourceModel::Pinned => "pinned",
            SourceModel::Droop(_) => "droop",
            SourceModel::CommonSetpoint => "common_setpoint",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadFlowFailure {
    NotConverged,
    SingularJacobian,
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumSolution {
    /// Bus voltages in volts.
    pub v_star: Vec<f64>,
    /// Line currents in amperes, `R⁻¹∇v*`.
    pub i_star: Vec<f64>,
    /// Source setpoints in source order.
    pub u_star: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the power mismatch, watts.
    pub residual_norm: f64,
    pub tolerance: f64,
    pub failure: Option<LoadFlowFailure>,
    pub source_model: &'static str,
}

impl EquilibriumSolution {
    /// Power injected into the network at every bus, `v_k (∇ᵀi)_k`.
    /// Negative on loads.
    pub fn injected_power(&self, graph: &NetworkGraph) -> Result<Vec<f64>> {
        let out = graph.incidence_transpose_apply(&self.i_star)?;
        Ok(out.iter().zip(&self.v_star).map(|(o, v)| o * v).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadFlowOptions {
    /// Power mismatch tolerance in watts; `None` selects the default.
    pub tolerance: Option<f64>,
    pub max_iter: usize,
}

impl Default for LoadFlowOptions {
    fn default() -> Self {
        LoadFlowOptions {
            tolerance: None,
            max_iter: 50,
        }
    }
}

/// `1e-10 · p_Σ`, floored at 1 nW.
pub fn default_tolerance(graph: &NetworkGraph) -> f64 {
    (1e-10 * graph.total_load_power()).max(1e-9)
}

/// Solves the load flow with source voltages pinned at `v_ref`.
pub fn solve_equilibrium(
    graph: &NetworkGraph,
    v_ref: f64,
    tolerance: f64,
    max_iter: usize,
) -> Result<EquilibriumSolution> {
    solve_load_flow(
        graph,
        v_ref,
        &SourceModel::Pinned,
        LoadFlowOptions {
            tolerance: Some(tolerance),
            max_iter,
        },
    )
}

/// Solves the equilibrium equations for the given source model.
///
/// Invalid inputs are errors; failure to converge is reported through
/// [`EquilibriumSolution::converged`] and [`EquilibriumSolution::failure`].
pub fn solve_load_flow(
    graph: &NetworkGraph,
    v_ref: f64,
    model: &SourceModel,
    opts: LoadFlowOptions,
) -> Result<EquilibriumSolution> {
    graph.ensure_valid()?;
    if !(v_ref > 0.0 && v_ref.is_finite()) {
        return Err(GridError::param("v_ref", "must be positive"));
    }
    if let SourceModel::Droop(u) = model {
        check_len("source setpoints", graph.sources().len(), u.len())?;
    }
    let tol = opts.tolerance.unwrap_or_else(|| default_tolerance(graph));
    let system = MismatchSystem::new(graph, v_ref, model)?;

    let mut x = system.initial_guess();
    let mut residual = system.residual(&x);
    let mut norm = residual.amax();
    let mut iterations = 0;
    let mut failure = None;

    while !(norm <= tol) {
        if !norm.is_finite() {
            failure = Some(LoadFlowFailure::NonFinite);
            break;
        }
        if iterations >= opts.max_iter {
            failure = Some(LoadFlowFailure::NotConverged);
            break;
        }
        let jac = system.jacobian(&x);
        let Some(step) = jac.lu().solve(&(-&residual)) else {
            failure = Some(LoadFlowFailure::SingularJacobian);
            break;
        };
        if step.iter().any(|s| !s.is_finite()) {
            failure = Some(LoadFlowFailure::SingularJacobian);
            break;
        }
        let floor = 0.01 * v_ref;
        let mut alpha = 1.0;
        for _ in 0..60 {
            if system.load_voltages_above(&x, &step, alpha, floor) {
                break;
            }
            alpha *= 0.5;
        }
        x += alpha * step;
        iterations += 1;
        residual = system.residual(&x);
        norm = residual.amax();
    }

    let v_star = system.voltages(&x);
    let drops = graph.incidence_apply(&v_star)?;
    let i_star = drops
        .iter()
        .zip(graph.lines())
        .map(|(d, l)| d / l.resistance)
        .collect();
    let u_star = system.setpoints(&x);

    Ok(EquilibriumSolution {
        v_star,
        i_star,
        u_star,
        converged: failure.is_none(),
        iterations,
        residual_norm: norm,
        tolerance: tol,
        failure,
        source_model: model.name(),
    })
}

/// Power-mismatch equations in the free variables of a source model.
struct MismatchSystem<'a> {
    graph: &'a NetworkGraph,
    lap: DMatrix<f64>,
    v_ref: f64,
    model: &'a SourceModel,
    /// Buses whose voltage is an unknown, in bus order.
    free: Vec<usize>,
    /// Position of each bus in `free`, if free.
    slot: Vec<Option<usize>>,
    powers: Vec<f64>,
    droop: Vec<f64>,
}

impl<'a> MismatchSystem<'a> {
    fn new(graph: &'a NetworkGraph, v_ref: f64, model: &'a SourceModel) -> Result<Self> {
        let free: Vec<usize> = match model {
            SourceModel::Pinned => graph.loads().to_vec(),
            _ => (0..graph.n()).collect(),
        };
        let mut slot = vec![None; graph.n()];
        for (j, &k) in free.iter().enumerate() {
            slot[k] = Some(j);
        }
        let mut droop = vec![0.0; graph.n()];
        for &k in graph.sources() {
            droop[k] = graph.source_params(k).map_or(0.0, |s| s.droop_resistance);
        }
        Ok(MismatchSystem {
            graph,
            lap: graph.laplacian()?,
            v_ref,
            model,
            free,
            slot,
            powers: graph.load_powers(),
            droop,
        })
    }

    fn dim(&self) -> usize {
        self.free.len() + usize::from(matches!(self.model, SourceModel::CommonSetpoint))
    }

    fn initial_guess(&self) -> DVector<f64> {
        DVector::from_element(self.dim(), self.v_ref)
    }

    fn voltages(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.graph.n())
            .map(|k| self.slot[k].map_or(self.v_ref, |j| x[j]))
            .collect()
    }

    /// Setpoint of every source in source order.
    fn setpoints(&self, x: &DVector<f64>) -> Vec<f64> {
        let n_s = self.graph.sources().len();
        match self.model {
            SourceModel::Pinned => {
                // The droop law gives the setpoint that holds v_k = v_ref.
                let v = self.voltages(x);
                let lv = &self.lap * DVector::from_column_slice(&v);
                self.graph
                    .sources()
                    .iter()
                    .map(|&k| v[k] + self.droop[k] * lv[k])
                    .collect()
            }
            SourceModel::Droop(u) => u.clone(),
            SourceModel::CommonSetpoint => vec![x[self.free.len()]; n_s],
        }
    }

    fn source_setpoint(&self, x: &DVector<f64>, source_pos: usize) -> f64 {
        match self.model {
            SourceModel::Droop(u) => u[source_pos],
            SourceModel::CommonSetpoint => x[self.free.len()],
            SourceModel::Pinned => self.v_ref,
        }
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let v = DVector::from_column_slice(&self.voltages(x));
        let lv = &self.lap * &v;
        let mut r = DVector::zeros(self.dim());
        let mut source_pos = 0;
        for (j, &k) in self.free.iter().enumerate() {
            r[j] = if self.droop[k] > 0.0 {
                let u = self.source_setpoint(x, source_pos);
                source_pos += 1;
                self.v_ref * ((v[k] - u) / self.droop[k] + lv[k])
            } else {
                self.powers[k] + v[k] * lv[k]
            };
        }
        if matches!(self.model, SourceModel::CommonSetpoint) {
            let srcs = self.graph.sources();
            let mean = srcs.iter().map(|&k| v[k]).sum::<f64>() / srcs.len() as f64;
            r[self.free.len()] = self.voltage_row_scale() * (mean - self.v_ref);
        }
        r
    }

    fn voltage_row_scale(&self) -> f64 {
        let srcs = self.graph.sources();
        self.v_ref * srcs.iter().map(|&k| 1.0 / self.droop[k]).sum::<f64>() / srcs.len() as f64
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let v = DVector::from_column_slice(&self.voltages(x));
        let lv = &self.lap * &v;
        let dim = self.dim();
        let mut jac = DMatrix::zeros(dim, dim);
        let common = matches!(self.model, SourceModel::CommonSetpoint);
        let u_col = self.free.len();
        for (row, &k) in self.free.iter().enumerate() {
            if self.droop[k] > 0.0 {
                for (col, &j) in self.free.iter().enumerate() {
                    jac[(row, col)] = self.v_ref * self.lap[(k, j)];
                }
                jac[(row, row)] += self.v_ref / self.droop[k];
                if common {
                    jac[(row, u_col)] = -self.v_ref / self.droop[k];
                }
            } else {
                for (col, &j) in self.free.iter().enumerate() {
                    jac[(row, col)] = v[k] * self.lap[(k, j)];
                }
                jac[(row, row)] += lv[k];
            }
        }
        if common {
            let srcs = self.graph.sources();
            let w = self.voltage_row_scale() / srcs.len() as f64;
            for &k in srcs {
                if let Some(col) = self.slot[k] {
                    jac[(u_col, col)] = w;
                }
            }
        }
        jac
    }

    fn load_voltages_above(&self, x: &DVector<f64>, step: &DVector<f64>, alpha: f64, floor: f64) -> bool {
        self.graph.loads().iter().all(|&k| {
            self.slot[k].is_none_or(|j| x[j] + alpha * step[j] >= floor)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveImpedance {
    /// Load buses indexing the rows and columns of `z`.
    pub load_buses: Vec<usize>,
    #[serde(serialize_with = "serialize_matrix")]
    pub z: DMatrix<f64>,
    /// Largest diagonal entry: the worst effective resistance between a
    /// load bus and the grounded sources.
    pub z_inf_star: f64,
    /// Induced ∞-norm (max absolute row sum) of `z`.
    pub row_sum_norm: f64,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// Inverse of the load-bus block of the weighted Laplacian.
pub fn effective_impedance(graph: &NetworkGraph) -> Result<EffectiveImpedance> {
    graph.ensure_valid()?;
    let loads = graph.loads();
    if loads.is_empty() {
        return Err(GridError::NoLoads);
    }
    let lap = graph.laplacian()?;
    let block = DMatrix::from_fn(loads.len(), loads.len(), |r, c| lap[(loads[r], loads[c])]);
    let z = block
        .cholesky()
        .ok_or(GridError::Singular("grounded Laplacian"))?
        .inverse();
    let z_inf_star = z.diagonal().max();
    let row_sum_norm = (0..z.nrows())
        .map(|r| z.row(r).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(EffectiveImpedance {
        load_buses: loads.to_vec(),
        z,
        z_inf_star,
        row_sum_norm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinVoltageCheck {
    pub pass: bool,
    /// Lowest-voltage load bus, if any load exists.
    pub worst_bus: Option<usize>,
    pub worst_voltage: Option<f64>,
    pub v_min: f64,
}

/// Every load bus voltage must strictly exceed `v_min`.
pub fn check_min_voltage(graph: &NetworkGraph, sol: &EquilibriumSolution, v_min: f64) -> MinVoltageCheck {
    let worst = graph
        .loads()
        .iter()
        .map(|&k| (k, sol.v_star[k]))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    MinVoltageCheck {
        pass: sol.converged && worst.is_none_or(|(_, v)| v > v_min),
        worst_bus: worst.map(|w| w.0),
        worst_voltage: worst.map(|w| w.1),
        v_min,
    }
}
