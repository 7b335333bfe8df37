//! Transient simulation of the microgrid under a source control law.
//!
//! Source buses carry no capacitor, so their voltage is algebraic:
//! `v_k = u_k − r_k (∇ᵀi)_k`. Because `(∇ᵀi)_k` depends on line currents only,
//! the source voltages are substituted out and the remaining system is an
//! explicit ODE in the line currents, load voltages, and controller states.
//!
//! State vector layout: `[i (m) | v_load (n_l) | u (n_s, differential laws) | ξ (standard secondary)]`.

use serde::Serialize;

use crate::controllers::{control_derivative, standard_setpoint_closed_loop, ControllerKind, SourceMeasurements};
use crate::error::{check_len, GridError, Result};
use crate::load_flow::{solve_load_flow, EquilibriumSolution, LoadFlowOptions, SourceModel};
use crate::network::NetworkGraph;
use crate::ode::{IntegratorStats, Rkf45, StepControl};
use crate::potentials::{bm_potential_p, lyapunov_v_diagonal, StateDerivative, SystemState};

/// Step change of one load's power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub target: usize,
    pub new_power: f64,
}

impl Event {
    pub fn validate(&self, graph: &NetworkGraph) -> Result<()> {
        if !(self.time >= 0.0 && self.time.is_finite()) {
            return Err(GridError::param("event time", "must be nonnegative"));
        }
        if self.target >= graph.n() || graph.load_params(self.target).is_none() {
            return Err(GridError::param(
                format!("event target {}", self.target),
                "event target is not a load",
            ));
        }
        if !(self.new_power >= 0.0 && self.new_power.is_finite()) {
            return Err(GridError::param("event power", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub t_end: f64,
    pub max_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_interval: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_end: 0.05,
            max_step: 1e-6,
            rel_tol: 1e-8,
            abs_tol: 1e-9,
            sample_interval: 1e-5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("t_end", self.t_end),
            ("max_step", self.max_step),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("sample_interval", self.sample_interval),
        ];
        for (name, x) in fields {
            if !(x > 0.0 && x.is_finite()) {
                return Err(GridError::param(name, "must be positive"));
            }
        }
        if self.max_step > self.sample_interval {
            return Err(GridError::param("max_step", "must not exceed sample_interval"));
        }
        Ok(())
    }
}

/// Derivatives of the reduced system.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedDerivative {
    pub di: Vec<f64>,
    /// Load voltage rates in load order.
    pub dv_load: Vec<f64>,
    /// Setpoint rates in source order; zero for algebraic controllers.
    pub du: Vec<f64>,
}

/// Reduced right-hand side for explicit setpoints `u`.
///
/// `v_load` and `p_load` are in load order. Source voltages are rebuilt from
/// `u` and the line currents before the line and load laws are evaluated.
pub fn reduced_rhs(
    graph: &NetworkGraph,
    kind: &ControllerKind,
    v_ref: f64,
    i: &[f64],
    v_load: &[f64],
    u: &[f64],
    p_load: &[f64],
) -> Result<ReducedDerivative> {
    let n_l = graph.loads().len();
    check_len("load voltages", n_l, v_load.len())?;
    check_len("load powers", n_l, p_load.len())?;
    check_len("source setpoints", graph.sources().len(), u.len())?;
    let mut plant = Plant::new(graph, kind, v_ref)?;
    let out = graph.incidence_transpose_apply(i)?;
    plant.assemble_voltages(&out, v_load, u, 0.0)?;
    let mut di = vec![0.0; graph.m()];
    let mut dv_load = vec![0.0; n_l];
    plant.line_rates(i, &mut di);
    plant.load_rates(&out, p_load, &mut dv_load);
    let du = plant.setpoint_rates(&out)?;
    Ok(ReducedDerivative { di, dv_load, du })
}

/// Precomputed network data shared by every right-hand-side evaluation.
struct Plant<'a> {
    graph: &'a NetworkGraph,
    kind: &'a ControllerKind,
    v_ref: f64,
    droop: Vec<f64>,
    /// Full node voltage vector, rebuilt on every evaluation.
    v: Vec<f64>,
}

impl<'a> Plant<'a> {
    fn new(graph: &'a NetworkGraph, kind: &'a ControllerKind, v_ref: f64) -> Result<Self> {
        graph.ensure_valid()?;
        kind.validate(graph.sources().len())?;
        Ok(Plant {
            graph,
            kind,
            v_ref,
            droop: graph.droop_resistances(),
            v: vec![0.0; graph.n()],
        })
    }

    fn assemble_voltages(&mut self, out: &[f64], v_load: &[f64], u: &[f64], time: f64) -> Result<()> {
        for (&k, &v) in self.graph.loads().iter().zip(v_load) {
            if !(v > 0.0) {
                return Err(GridError::CplCollapse { time, bus: k, voltage: v });
            }
            self.v[k] = v;
        }
        for ((&k, &uk), &r) in self.graph.sources().iter().zip(u).zip(&self.droop) {
            self.v[k] = uk - r * out[k];
        }
        Ok(())
    }

    fn line_rates(&self, i: &[f64], di: &mut [f64]) {
        for ((l, &ia), d) in self.graph.lines().iter().zip(i).zip(di.iter_mut()) {
            *d = (-l.resistance * ia + self.v[l.from] - self.v[l.to]) / l.inductance;
        }
    }

    fn load_rates(&self, out: &[f64], p_load: &[f64], dv: &mut [f64]) {
        for ((&k, &p), d) in self.graph.loads().iter().zip(p_load).zip(dv.iter_mut()) {
            let c = self.graph.load_params(k).map_or(1.0, |l| l.capacitance);
            *d = (-p / self.v[k] - out[k]) / c;
        }
    }

    fn v_bar(&self) -> f64 {
        let s = self.graph.sources();
        s.iter().map(|&k| self.v[k]).sum::<f64>() / s.len() as f64
    }

    fn mean_droop_drop(&self, out: &[f64]) -> f64 {
        let s = self.graph.sources();
        s.iter().zip(&self.droop).map(|(&k, r)| r * out[k]).sum::<f64>() / s.len() as f64
    }

    /// Setpoint rates from the current measurements; zero for algebraic laws.
    fn setpoint_rates(&self, out: &[f64]) -> Result<Vec<f64>> {
        let srcs = self.graph.sources();
        if !self.kind.is_differential() {
            return Ok(vec![0.0; srcs.len()]);
        }
        let meas = SourceMeasurements {
            voltages: srcs.iter().map(|&k| self.v[k]).collect(),
            powers: srcs.iter().map(|&k| self.v[k] * out[k]).collect(),
        };
        control_derivative(self.kind, self.graph, &meas, self.v_ref)
    }
}

/// Offsets into the packed state vector.
#[derive(Clone, Copy, Debug)]
struct Layout {
    m: usize,
    n_l: usize,
    n_u: usize,
    has_integral: bool,
}

impl Layout {
    fn new(graph: &NetworkGraph, kind: &ControllerKind) -> Self {
        Layout {
            m: graph.m(),
            n_l: graph.loads().len(),
            n_u: if kind.is_differential() { graph.sources().len() } else { 0 },
            has_integral: matches!(kind, ControllerKind::StandardSecondary { .. }),
        }
    }

    fn dim(&self) -> usize {
        self.m + self.n_l + self.n_u + usize::from(self.has_integral)
    }

    fn loads(&self) -> std::ops::Range<usize> {
        self.m..self.m + self.n_l
    }

    fn setpoints(&self) -> std::ops::Range<usize> {
        self.m + self.n_l..self.m + self.n_l + self.n_u
    }

    fn integral(&self) -> Option<usize> {
        self.has_integral.then(|| self.m + self.n_l + self.n_u)
    }
}

/// The reduced ODE with its scratch buffers.
struct ReducedSystem<'a> {
    plant: Plant<'a>,
    layout: Layout,
    out: Vec<f64>,
    u: Vec<f64>,
    /// Current load powers in load order.
    p_load: Vec<f64>,
}

impl<'a> ReducedSystem<'a> {
    fn new(graph: &'a NetworkGraph, kind: &'a ControllerKind, v_ref: f64) -> Result<Self> {
        let p_load = graph
            .loads()
            .iter()
            .map(|&k| graph.load_params(k).map_or(0.0, |l| l.power))
            .collect();
        Ok(ReducedSystem {
            plant: Plant::new(graph, kind, v_ref)?,
            layout: Layout::new(graph, kind),
            out: vec![0.0; graph.n()],
            u: vec![0.0; graph.sources().len()],
            p_load,
        })
    }

    /// Computes `∇ᵀi`, the setpoints and the full voltage vector for `y`.
    fn prepare(&mut self, t: f64, y: &[f64]) -> Result<()> {
        let lay = self.layout;
        let graph = self.plant.graph;
        let i = &y[..lay.m];
        self.out.iter_mut().for_each(|x| *x = 0.0);
        for (l, &ia) in graph.lines().iter().zip(i) {
            self.out[l.from] += ia;
            self.out[l.to] -= ia;
        }
        let v_ref = self.plant.v_ref;
        match self.plant.kind {
            ControllerKind::DroopOnly => self.u.iter_mut().for_each(|u| *u = v_ref),
            ControllerKind::StandardSecondary { k_p, k_i } => {
                let xi = lay.integral().map_or(0.0, |j| y[j]);
                let d = self.plant.mean_droop_drop(&self.out);
                let u = standard_setpoint_closed_loop(*k_p, *k_i, xi, d, v_ref);
                self.u.iter_mut().for_each(|x| *x = u);
            }
            _ => self.u.copy_from_slice(&y[lay.setpoints()]),
        }
        self.plant.assemble_voltages(&self.out, &y[lay.loads()], &self.u, t)
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.prepare(t, y)?;
        let lay = self.layout;
        let (di, rest) = dy.split_at_mut(lay.m);
        let (dv, rest) = rest.split_at_mut(lay.n_l);
        self.plant.line_rates(&y[..lay.m], di);
        self.plant.load_rates(&self.out, &self.p_load, dv);
        if lay.n_u > 0 {
            let du = self.plant.setpoint_rates(&self.out)?;
            rest[..lay.n_u].copy_from_slice(&du);
        }
        if lay.has_integral {
            rest[lay.n_u] = self.plant.v_ref - self.plant.v_bar();
        }
        Ok(())
    }

    /// Full state and derivative at `y`, including source-bus voltage rates
    /// from the algebraic limit and the setpoint rates of every law.
    fn full(&mut self, t: f64, y: &[f64]) -> Result<(SystemState, StateDerivative)> {
        let lay = self.layout;
        let mut dy = vec![0.0; lay.dim()];
        self.rhs(t, y, &mut dy)?;
        let graph = self.plant.graph;
        let di = dy[..lay.m].to_vec();
        let mut d_out = vec![0.0; graph.n()];
        for (l, &d) in graph.lines().iter().zip(&di) {
            d_out[l.from] += d;
            d_out[l.to] -= d;
        }
        let du: Vec<f64> = match self.plant.kind {
            ControllerKind::DroopOnly => vec![0.0; self.u.len()],
            ControllerKind::StandardSecondary { k_p, k_i } => {
                let d_drop = self.plant.mean_droop_drop(&d_out);
                let xi_rate = self.plant.v_ref - self.plant.v_bar();
                vec![(k_p * d_drop + k_i * xi_rate) / (1.0 + k_p); self.u.len()]
            }
            _ => dy[lay.setpoints()].to_vec(),
        };
        let mut dv = vec![0.0; graph.n()];
        for (&k, &d) in graph.loads().iter().zip(&dy[lay.loads()]) {
            dv[k] = d;
        }
        for ((&k, &d), r) in graph.sources().iter().zip(&du).zip(&self.plant.droop) {
            dv[k] = d - r * d_out[k];
        }
        let state = SystemState {
            i: y[..lay.m].to_vec(),
            v: self.plant.v.clone(),
            u: self.u.clone(),
        };
        Ok((state, StateDerivative { di, dv, du }))
    }
}

/// Initial condition selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Droop equilibrium of the t = 0 loads with every setpoint at its
    /// initial value, currents `R⁻¹∇v`.
    Equilibrium,
    /// All voltages at their setpoints, zero current.
    Cold,
}

/// Builds the t = 0 state for `graph` (whose load powers are the t = 0
/// powers). Setpoints start at each source's configured initial value.
pub fn initial_state(graph: &NetworkGraph, v_ref: f64, mode: InitialCondition) -> Result<SystemState> {
    graph.ensure_valid()?;
    let u: Vec<f64> = graph
        .sources()
        .iter()
        .map(|&k| graph.source_params(k).map_or(v_ref, |s| s.initial_setpoint))
        .collect();
    match mode {
        InitialCondition::Cold => {
            let mut v = vec![v_ref; graph.n()];
            for (&k, &uk) in graph.sources().iter().zip(&u) {
                v[k] = uk;
            }
            Ok(SystemState {
                i: vec![0.0; graph.m()],
                v,
                u,
            })
        }
        InitialCondition::Equilibrium => {
            let sol = solve_load_flow(graph, v_ref, &SourceModel::Droop(u.clone()), LoadFlowOptions::default())?;
            if !sol.converged {
                return Err(GridError::param(
                    "initial condition",
                    "no droop equilibrium exists for the initial loads",
                ));
            }
            Ok(SystemState {
                i: sol.i_star,
                v: sol.v_star,
                u,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub i: Vec<f64>,
    /// All bus voltages.
    pub v: Vec<f64>,
    /// Setpoints in source order.
    pub u: Vec<f64>,
    /// Source powers in source order.
    pub source_power: Vec<f64>,
    pub v_bar: f64,
    pub p_bar: f64,
    /// Total load demand in effect.
    pub load_power: f64,
    pub lyapunov: f64,
    pub potential: f64,
    /// `∫(v_ref − v̄)dt` for the standard secondary controller.
    pub integral: Option<f64>,
    /// Largest load or setpoint rate, V/s.
    pub rate_norm: f64,
}

impl Sample {
    pub fn state(&self) -> SystemState {
        SystemState {
            i: self.i.clone(),
            v: self.v.clone(),
            u: self.u.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "failure", rename_all = "snake_case")]
pub enum SimFailure {
    CplCollapse { time: f64, bus: usize, voltage: f64 },
    StepUnderflow { time: f64, step: f64 },
}

impl From<SimFailure> for GridError {
    fn from(f: SimFailure) -> Self {
        match f {
            SimFailure::CplCollapse { time, bus, voltage } => GridError::CplCollapse { time, bus, voltage },
            SimFailure::StepUnderflow { time, step } => GridError::StepUnderflow { time, step },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub controller: &'static str,
    pub v_ref: f64,
    /// Participation factors used for the sharing metric.
    pub lambda: Vec<f64>,
    pub source_buses: Vec<usize>,
    pub samples: Vec<Sample>,
    /// Load powers in effect at the last sample, node vector.
    pub final_powers: Vec<f64>,
    pub stats: IntegratorStats,
    /// Set when integration stopped early; samples hold the valid prefix.
    pub failure: Option<SimFailure>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds the initial sample")
    }

    pub fn ensure_complete(&self) -> Result<()> {
        match &self.failure {
            None => Ok(()),
            Some(f) => Err(f.clone().into()),
        }
    }

    pub fn duration(&self) -> f64 {
        self.last().t - self.samples[0].t
    }
}

/// Simulates from `initial` with load powers of `graph` in effect at t = 0
/// and `events` applied exactly at their timestamps.
///
/// Integration failures are reported in [`Trajectory::failure`] together
/// with every sample recorded before the failure.
pub fn simulate(
    graph: &NetworkGraph,
    kind: &ControllerKind,
    v_ref: f64,
    events: &[Event],
    config: &SimConfig,
    initial: &SystemState,
) -> Result<Trajectory> {
    config.validate()?;
    initial.check(graph)?;
    for e in events {
        e.validate(graph)?;
        if e.time >= config.t_end {
            return Err(GridError::param("event time", "must be before t_end"));
        }
    }
    let mut sys = ReducedSystem::new(graph, kind, v_ref)?;
    let lay = sys.layout;
    let tau_max = graph.tau_max()?;
    let tau_min = graph
        .lines()
        .iter()
        .map(|l| l.time_constant())
        .fold(f64::INFINITY, f64::min);
    let c_u = match kind {
        ControllerKind::Uncoordinated { c_u } => *c_u,
        _ => 1.0,
    };
    let lambda = match kind {
        ControllerKind::Multipurpose { lambda, .. } => lambda.clone(),
        _ => vec![1.0; graph.sources().len()],
    };

    let mut y = pack(graph, kind, v_ref, initial, &lay)?;
    let mut events: Vec<Event> = events.to_vec();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let load_slot: Vec<Option<usize>> = {
        let mut s = vec![None; graph.n()];
        for (j, &k) in graph.loads().iter().enumerate() {
            s[k] = Some(j);
        }
        s
    };
    let mut current = graph.clone();

    let stops = stop_times(config, &events);
    let ctl = StepControl {
        rel_tol: config.rel_tol,
        abs_tol: config.abs_tol,
        max_step: config.max_step,
        min_step: 1e-9 * tau_min,
    };
    let mut rk = Rkf45::new(lay.dim());
    let mut h = (tau_min / 100.0).min(config.max_step);
    let mut next_event = 0;
    let mut samples = Vec::with_capacity(stops.len());
    let mut failure = None;
    let mut t = 0.0;

    for stop in &stops {
        if stop.time > t {
            let mut f = |tt: f64, yy: &[f64], dy: &mut [f64]| sys.rhs(tt, yy, dy);
            if let Err(e) = rk.advance(&mut f, t, stop.time, &mut y, &mut h, &ctl) {
                failure = Some(match e {
                    GridError::CplCollapse { time, bus, voltage } => SimFailure::CplCollapse { time, bus, voltage },
                    GridError::StepUnderflow { time, step } => {
                        collapse_at(graph, &y[lay.loads()], time, v_ref).unwrap_or(SimFailure::StepUnderflow { time, step })
                    }
                    other => return Err(other),
                });
                break;
            }
            t = stop.time;
        }
        while next_event < events.len() && events[next_event].time <= t + 1e-12 * config.sample_interval {
            let e = events[next_event];
            if let Some(j) = load_slot[e.target] {
                sys.p_load[j] = e.new_power;
            }
            current = current.with_load_power(e.target, e.new_power)?;
            next_event += 1;
        }
        if stop.sample {
            match record(&mut sys, &current, t, &y, v_ref, tau_max, c_u) {
                Ok(s) => samples.push(s),
                Err(GridError::CplCollapse { time, bus, voltage }) => {
                    failure = Some(SimFailure::CplCollapse { time, bus, voltage });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    if samples.is_empty() {
        return Err(failure.map_or(GridError::param("initial state", "could not be evaluated"), Into::into));
    }

    Ok(Trajectory {
        controller: kind.name(),
        v_ref,
        lambda,
        source_buses: graph.sources().to_vec(),
        samples,
        final_powers: current.load_powers(),
        stats: rk.stats,
        failure,
    })
}

/// Load voltage below which a step-size underflow is reported as CPL collapse.
pub const COLLAPSE_FRACTION: f64 = 0.01;

/// Near collapse `dv/dt = −p/(Cv)` diverges, so the stepper stalls before
/// any voltage reaches zero.
fn collapse_at(graph: &NetworkGraph, v_load: &[f64], time: f64, v_ref: f64) -> Option<SimFailure> {
    let (j, &voltage) = v_load.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    (voltage < COLLAPSE_FRACTION * v_ref).then(|| SimFailure::CplCollapse {
        time,
        bus: graph.loads()[j],
        voltage,
    })
}

fn pack(graph: &NetworkGraph, kind: &ControllerKind, v_ref: f64, s: &SystemState, lay: &Layout) -> Result<Vec<f64>> {
    let mut y = vec![0.0; lay.dim()];
    y[..lay.m].copy_from_slice(&s.i);
    for (slot, &k) in y[lay.loads()].iter_mut().zip(graph.loads()) {
        *slot = s.v[k];
    }
    if lay.n_u > 0 {
        y[lay.setpoints()].copy_from_slice(&s.u);
    }
    if let (Some(j), ControllerKind::StandardSecondary { k_p, k_i }) = (lay.integral(), kind) {
        // Invert the closed-loop setpoint so the run starts at the given u.
        let out = graph.incidence_transpose_apply(&s.i)?;
        let droop = graph.droop_resistances();
        let srcs = graph.sources();
        let d = srcs.iter().zip(&droop).map(|(&k, r)| r * out[k]).sum::<f64>() / srcs.len() as f64;
        let u0 = s.u.iter().sum::<f64>() / s.u.len() as f64;
        y[j] = ((1.0 + k_p) * (u0 - v_ref) - k_p * d) / k_i;
    }
    Ok(y)
}

struct Stop {
    time: f64,
    sample: bool,
}

/// Sample times `k·Δt` merged with event times.
fn stop_times(config: &SimConfig, events: &[Event]) -> Vec<Stop> {
    let dt = config.sample_interval;
    let count = (config.t_end / dt + 1e-9).floor() as usize;
    let mut stops: Vec<Stop> = (0..=count)
        .map(|k| Stop {
            time: k as f64 * dt,
            sample: true,
        })
        .collect();
    let merge_tol = 1e-9 * dt;
    for e in events {
        match stops.iter_mut().find(|s| (s.time - e.time).abs() <= merge_tol) {
            Some(s) => s.time = e.time,
            None => stops.push(Stop {
                time: e.time,
                sample: false,
            }),
        }
    }
    stops.sort_by(|a, b| a.time.total_cmp(&b.time));
    stops
}

fn record(
    sys: &mut ReducedSystem,
    current: &NetworkGraph,
    t: f64,
    y: &[f64],
    v_ref: f64,
    tau_max: f64,
    c_u: f64,
) -> Result<Sample> {
    let (state, deriv) = sys.full(t, y)?;
    let graph = sys.plant.graph;
    let source_power: Vec<f64> = graph.sources().iter().map(|&k| state.v[k] * sys.out[k]).collect();
    let n_s = source_power.len() as f64;
    let rate_norm = graph
        .loads()
        .iter()
        .map(|&k| deriv.dv[k].abs())
        .chain(deriv.du.iter().map(|d| d.abs()))
        .fold(0.0, f64::max);
    Ok(Sample {
        t,
        v_bar: graph.sources().iter().map(|&k| state.v[k]).sum::<f64>() / n_s,
        p_bar: source_power.iter().sum::<f64>() / n_s,
        load_power: sys.p_load.iter().sum(),
        lyapunov: lyapunov_v_diagonal(current, &state, &deriv, tau_max, c_u)?,
        potential: bm_potential_p(current, &state, &deriv, v_ref, tau_max)?,
        integral: sys.layout.integral().map(|j| y[j]),
        rate_norm,
        source_power,
        i: state.i,
        v: state.v,
        u: state.u,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SteadyStateMetrics {
    /// Window average of `max_k |P_k − λ_k P̄| / P̄`.
    pub sharing_error: f64,
    /// Window average of `|v̄ − v_ref|`, volts.
    pub voltage_error: f64,
    pub window: f64,
    pub samples: usize,
}

/// Sharing and voltage errors averaged over the trailing `window` seconds.
pub fn steady_state_metrics(traj: &Trajectory, window: f64) -> Result<SteadyStateMetrics> {
    if !(window > 0.0) || window > traj.duration() + 1e-12 {
        return Err(GridError::param("window", "must be positive and within the trajectory duration"));
    }
    let t_from = traj.last().t - window;
    let tail: Vec<&Sample> = traj.samples.iter().filter(|s| s.t >= t_from - 1e-12 * window).collect();
    let mut sharing = 0.0;
    let mut voltage = 0.0;
    for s in &tail {
        if !(s.p_bar > 0.0) {
            return Err(GridError::NoSharingReference(s.p_bar));
        }
        let worst = s
            .source_power
            .iter()
            .zip(&traj.lambda)
            .map(|(p, l)| (p - l * s.p_bar).abs())
            .fold(0.0, f64::max);
        sharing += worst / s.p_bar;
        voltage += (s.v_bar - traj.v_ref).abs();
    }
    let count = tail.len() as f64;
    Ok(SteadyStateMetrics {
        sharing_error: sharing / count,
        voltage_error: voltage / count,
        window,
        samples: tail.len(),
    })
}

/// Default settling threshold on the largest load-voltage or setpoint rate.
pub const SETTLED_RATE: f64 = 1e-4;

/// Relative tolerance for equilibrium agreement.
pub const EQUILIBRIUM_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub controller: &'static str,
    pub terminal_rate_norm: f64,
    /// Largest relative difference between simulated and solved load voltages.
    pub load_voltage_rel_error: f64,
    /// `|v̄ − v_ref|` at the last sample, volts.
    pub mean_source_voltage_error: f64,
    /// Largest `|P_k − λ_k P̄| / P̄` at the last sample (multipurpose only).
    pub sharing_error: Option<f64>,
    pub pass: bool,
}

/// Compares the settled end of a trajectory with a load-flow solution.
///
/// Load-bus voltages must agree to [`EQUILIBRIUM_REL_TOL`]. Secondary laws
/// must also hold `v̄ = v_ref`, and the multipurpose law the sharing target.
pub fn equilibrium_consistency(
    graph: &NetworkGraph,
    kind: &ControllerKind,
    traj: &Trajectory,
    sol: &EquilibriumSolution,
) -> Result<ConsistencyReport> {
    let last = traj.last();
    if last.rate_norm > SETTLED_RATE {
        return Err(GridError::NotSettled { norm: last.rate_norm });
    }
    check_len("equilibrium voltages", graph.n(), sol.v_star.len())?;
    let load_voltage_rel_error = graph
        .loads()
        .iter()
        .map(|&k| (last.v[k] - sol.v_star[k]).abs() / sol.v_star[k].abs())
        .fold(0.0, f64::max);
    let mean_source_voltage_error = (last.v_bar - traj.v_ref).abs();
    let volt_tol = EQUILIBRIUM_REL_TOL * traj.v_ref;
    let sharing_error = matches!(kind, ControllerKind::Multipurpose { .. }).then(|| {
        last.source_power
            .iter()
            .zip(&traj.lambda)
            .map(|(p, l)| (p - l * last.p_bar).abs() / last.p_bar)
            .fold(0.0, f64::max)
    });
    let voltage_ok = match kind {
        ControllerKind::StandardSecondary { .. } | ControllerKind::Multipurpose { .. } => {
            mean_source_voltage_error <= volt_tol
        }
        _ => true,
    };
    let pass = sol.converged
        && load_voltage_rel_error <= EQUILIBRIUM_REL_TOL
        && voltage_ok
        && sharing_error.is_none_or(|e| e <= EQUILIBRIUM_REL_TOL);
    Ok(ConsistencyReport {
        controller: kind.name(),
        terminal_rate_norm: last.rate_norm,
        load_voltage_rel_error,
        mean_source_voltage_error,
        sharing_error,
        pass,
    })
}
