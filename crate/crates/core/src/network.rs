//! Electrical graph of an ad hoc DC microgrid.
//!
//! Buses carry either a droop-controlled source or a constant power load with
//! an input capacitor. Lines are series RL branches between two buses. The
//! incidence structure is kept as the `(from, to)` pair of every line; the
//! incidence matrix and its transpose are only ever applied, never stored.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, GridError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Source,
    Load,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineParams {
    /// Series resistance in ohms.
    pub resistance: f64,
    /// Series inductance in henries.
    pub inductance: f64,
    /// Bus the positive current direction leaves from.
    pub from: usize,
    /// Bus the positive current direction enters.
    pub to: usize,
}

impl LineParams {
    pub fn new(from: usize, to: usize, resistance: f64, inductance: f64) -> Self {
        LineParams {
            resistance,
            inductance,
            from,
            to,
        }
    }

    /// Builds a line from its resistance and time constant `L/R`.
    pub fn with_time_constant(from: usize, to: usize, resistance: f64, tau: f64) -> Self {
        LineParams::new(from, to, resistance, resistance * tau)
    }

    pub fn time_constant(&self) -> f64 {
        self.inductance / self.resistance
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadParams {
    /// Constant power demand in watts.
    pub power: f64,
    /// Input capacitance in farads.
    pub capacitance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceParams {
    /// Virtual droop resistance in ohms.
    pub droop_resistance: f64,
    /// Internal voltage setpoint at t = 0, in volts.
    pub initial_setpoint: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bus {
    Source(SourceParams),
    Load(LoadParams),
}

impl Bus {
    pub fn source(droop_resistance: f64, initial_setpoint: f64) -> Self {
        Bus::Source(SourceParams {
            droop_resistance,
            initial_setpoint,
        })
    }

    pub fn load(power: f64, capacitance: f64) -> Self {
        Bus::Load(LoadParams { power, capacitance })
    }

    pub fn kind(&self) -> BusKind {
        match self {
            Bus::Source(_) => BusKind::Source,
            Bus::Load(_) => BusKind::Load,
        }
    }
}

/// Directed multigraph of buses and RL lines.
///
/// Construction never fails; call [`NetworkGraph::validate`] for a full
/// report or [`NetworkGraph::ensure_valid`] to turn problems into an error.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGraph {
    buses: Vec<Bus>,
    lines: Vec<LineParams>,
    sources: Vec<usize>,
    loads: Vec<usize>,
}

impl NetworkGraph {
    pub fn new(buses: Vec<Bus>, lines: Vec<LineParams>) -> Self {
        let sources = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind() == BusKind::Source)
            .map(|(k, _)| k)
            .collect();
        let loads = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind() == BusKind::Load)
            .map(|(k, _)| k)
            .collect();
        NetworkGraph {
            buses,
            lines,
            sources,
            loads,
        }
    }

    /// Number of buses.
    pub fn n(&self) -> usize {
        self.buses.len()
    }

    /// Number of lines.
    pub fn m(&self) -> usize {
        self.lines.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn bus(&self, k: usize) -> &Bus {
        &self.buses[k]
    }

    pub fn lines(&self) -> &[LineParams] {
        &self.lines
    }

    /// Source bus indices in bus order.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// Load bus indices in bus order.
    pub fn loads(&self) -> &[usize] {
        &self.loads
    }

    pub fn kind(&self, k: usize) -> BusKind {
        self.buses[k].kind()
    }

    pub fn load_params(&self, k: usize) -> Option<&LoadParams> {
        match &self.buses[k] {
            Bus::Load(p) => Some(p),
            Bus::Source(_) => None,
        }
    }

    pub fn source_params(&self, k: usize) -> Option<&SourceParams> {
        match &self.buses[k] {
            Bus::Source(p) => Some(p),
            Bus::Load(_) => None,
        }
    }

    /// Node vector of load powers (zero on source buses).
    pub fn load_powers(&self) -> Vec<f64> {
        self.buses
            .iter()
            .map(|b| match b {
                Bus::Load(p) => p.power,
                Bus::Source(_) => 0.0,
            })
            .collect()
    }

    /// Node vector of capacitances (zero on source buses, which are taken in
    /// the vanishing-capacitance limit).
    pub fn capacitances(&self) -> Vec<f64> {
        self.buses
            .iter()
            .map(|b| match b {
                Bus::Load(p) => p.capacitance,
                Bus::Source(_) => 0.0,
            })
            .collect()
    }

    /// Droop resistances of the sources, in source order.
    pub fn droop_resistances(&self) -> Vec<f64> {
        self.sources
            .iter()
            .map(|&k| self.source_params(k).map_or(0.0, |s| s.droop_resistance))
            .collect()
    }

    /// Sum of all load powers.
    pub fn total_load_power(&self) -> f64 {
        self.load_powers().iter().sum()
    }

    /// Sum of all line resistances.
    pub fn total_line_resistance(&self) -> f64 {
        self.lines.iter().map(|l| l.resistance).sum()
    }

    /// Copy of this graph with load bus `k` drawing `power`.
    pub fn with_load_power(&self, k: usize, power: f64) -> Result<Self> {
        let mut g = self.clone();
        match g.buses.get_mut(k) {
            Some(Bus::Load(p)) => {
                p.power = power;
                Ok(g)
            }
            _ => Err(GridError::param(
                format!("bus {k}"),
                "is not a load bus",
            )),
        }
    }

    /// Copy of this graph with every load power replaced by `powers[k]`.
    pub fn with_load_powers(&self, powers: &[f64]) -> Result<Self> {
        check_len("load power vector", self.n(), powers.len())?;
        let mut g = self.clone();
        for (bus, &p) in g.buses.iter_mut().zip(powers) {
            if let Bus::Load(l) = bus {
                l.power = p;
            }
        }
        Ok(g)
    }

    /// Potential drop across every line: `(∇v)_α = v[from] − v[to]`.
    pub fn incidence_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("node vector", self.n(), v.len())?;
        self.check_endpoints()?;
        Ok(self.lines.iter().map(|l| v[l.from] - v[l.to]).collect())
    }

    /// Net current leaving every bus: `(∇ᵀi)_k`.
    pub fn incidence_transpose_apply(&self, i: &[f64]) -> Result<Vec<f64>> {
        check_len("edge vector", self.m(), i.len())?;
        self.check_endpoints()?;
        let mut out = vec![0.0; self.n()];
        for (l, &ia) in self.lines.iter().zip(i) {
            out[l.from] += ia;
            out[l.to] -= ia;
        }
        Ok(out)
    }

    /// Largest line time constant `L/R`.
    pub fn tau_max(&self) -> Result<f64> {
        self.lines
            .iter()
            .map(LineParams::time_constant)
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
            .ok_or(GridError::NoLines)
    }

    /// Conductance-weighted Laplacian `∇ᵀR⁻¹∇` as a dense n×n matrix.
    pub fn laplacian(&self) -> Result<DMatrix<f64>> {
        self.check_endpoints()?;
        let n = self.n();
        let mut lap = DMatrix::zeros(n, n);
        for l in &self.lines {
            let g = 1.0 / l.resistance;
            lap[(l.from, l.from)] += g;
            lap[(l.to, l.to)] += g;
            lap[(l.from, l.to)] -= g;
            lap[(l.to, l.from)] -= g;
        }
        Ok(lap)
    }

    /// Connected components, treating every line as undirected.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for l in &self.lines {
            if l.from < n && l.to < n {
                let a = find(&mut parent, l.from);
                let b = find(&mut parent, l.to);
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_slot = vec![usize::MAX; n];
        for k in 0..n {
            let r = find(&mut parent, k);
            if root_slot[r] == usize::MAX {
                root_slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[root_slot[r]].push(k);
        }
        groups
    }

    /// Checks every structural and parameter requirement and reports all
    /// failures at once.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let n = self.n();

        if n == 0 {
            issues.push(ValidationIssue::Empty);
        }
        for (a, l) in self.lines.iter().enumerate() {
            for bus in [l.from, l.to] {
                if bus >= n {
                    issues.push(ValidationIssue::BusOutOfRange { line: a, bus });
                }
            }
            if l.from == l.to {
                issues.push(ValidationIssue::SelfLoop { line: a, bus: l.from });
            }
            positive(&mut issues, Element::Line(a), "resistance", l.resistance);
            positive(&mut issues, Element::Line(a), "inductance", l.inductance);
            if l.resistance > 0.0 && l.inductance > 0.0 && !l.time_constant().is_finite() {
                issues.push(ValidationIssue::NonPositive {
                    element: Element::Line(a),
                    quantity: "time constant",
                    value: l.time_constant(),
                });
            }
        }
        for (k, bus) in self.buses.iter().enumerate() {
            match bus {
                Bus::Load(p) => {
                    if !(p.power >= 0.0 && p.power.is_finite()) {
                        issues.push(ValidationIssue::NegativePower { bus: k, value: p.power });
                    }
                    positive(&mut issues, Element::Bus(k), "capacitance", p.capacitance);
                }
                Bus::Source(s) => {
                    positive(&mut issues, Element::Bus(k), "droop resistance", s.droop_resistance);
                    if !s.initial_setpoint.is_finite() {
                        issues.push(ValidationIssue::NonPositive {
                            element: Element::Bus(k),
                            quantity: "initial setpoint",
                            value: s.initial_setpoint,
                        });
                    }
                }
            }
        }
        if n > 0 && self.sources.is_empty() {
            issues.push(ValidationIssue::NoSource);
        }
        let components = self.components();
        if components.len() > 1 {
            issues.push(ValidationIssue::NotConnected {
                components: components.len(),
            });
        }

        ValidationReport {
            valid: issues.is_empty(),
            issues,
            n_buses: n,
            n_lines: self.m(),
            n_sources: self.sources.len(),
            n_loads: self.loads.len(),
            p_sigma: self.total_load_power(),
            r_sigma: self.total_line_resistance(),
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.valid {
            Ok(())
        } else {
            Err(GridError::InvalidNetwork(report.issues))
        }
    }

    fn check_endpoints(&self) -> Result<()> {
        let n = self.n();
        let bad: Vec<_> = self
            .lines
            .iter()
            .enumerate()
            .flat_map(|(a, l)| [(a, l.from), (a, l.to)])
            .filter(|&(_, bus)| bus >= n)
            .map(|(line, bus)| ValidationIssue::BusOutOfRange { line, bus })
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GridError::InvalidNetwork(bad))
        }
    }
}

fn positive(issues: &mut Vec<ValidationIssue>, element: Element, quantity: &'static str, value: f64) {
    if !(value > 0.0 && value.is_finite()) {
        issues.push(ValidationIssue::NonPositive {
            element,
            quantity,
            value,
        });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", content = "index", rename_all = "snake_case")]
pub enum Element {
    Bus(usize),
    Line(usize),
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Bus(k) => write!(f, "bus {k}"),
            Element::Line(a) => write!(f, "line {a}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ValidationIssue {
    Empty,
    NoSource,
    NotConnected { components: usize },
    SelfLoop { line: usize, bus: usize },
    BusOutOfRange { line: usize, bus: usize },
    NonPositive {
        element: Element,
        quantity: &'static str,
        value: f64,
    },
    NegativePower { bus: usize, value: f64 },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::Empty => write!(f, "network has no buses"),
            ValidationIssue::NoSource => write!(f, "no source"),
            ValidationIssue::NotConnected { components } => {
                write!(f, "not connected ({components} components)")
            }
            ValidationIssue::SelfLoop { line, bus } => {
                write!(f, "line {line} is a self-loop on bus {bus}")
            }
            ValidationIssue::BusOutOfRange { line, bus } => {
                write!(f, "line {line} references missing bus {bus}")
            }
            ValidationIssue::NonPositive {
                element,
                quantity,
                value,
            } => write!(f, "{element}: {quantity} must be positive, got {value}"),
            ValidationIssue::NegativePower { bus, value } => {
                write!(f, "bus {bus}: load power must be nonnegative, got {value}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub issues: Vec<ValidationIssue>,
    pub n_buses: usize,
    pub n_lines: usize,
    pub n_sources: usize,
    pub n_loads: usize,
    /// Total load power in watts.
    pub p_sigma: f64,
    /// Total line resistance in ohms.
    pub r_sigma: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus(r: f64) -> NetworkGraph {
        NetworkGraph::new(
            vec![Bus::source(0.5, 48.0), Bus::load(35.11, 845.7e-6)],
            vec![LineParams::with_time_constant(0, 1, r, 55.45e-6)],
        )
    }

    fn triangle() -> NetworkGraph {
        NetworkGraph::new(
            vec![Bus::source(0.5, 48.0), Bus::load(1.0, 1e-3), Bus::load(1.0, 1e-3)],
            vec![
                LineParams::new(0, 1, 1.0, 1e-5),
                LineParams::new(1, 2, 1.0, 1e-5),
                LineParams::new(0, 2, 1.0, 1e-5),
            ],
        )
    }

    #[test]
    fn single_edge_is_valid() {
        let report = two_bus(0.111).validate();
        assert!(report.valid, "{:?}", report.issues);
        assert_eq!(report.r_sigma, 0.111);
        assert_eq!(report.p_sigma, 35.11);
    }

    #[test]
    fn no_source_is_rejected() {
        let g = NetworkGraph::new(
            vec![Bus::load(1.0, 1e-3), Bus::load(1.0, 1e-3)],
            vec![LineParams::new(0, 1, 0.1, 1e-6)],
        );
        let report = g.validate();
        assert!(!report.valid);
        assert!(report.issues.contains(&ValidationIssue::NoSource));
        assert_eq!(ValidationIssue::NoSource.to_string(), "no source");
    }

    #[test]
    fn disjoint_pairs_are_not_connected() {
        let g = NetworkGraph::new(
            vec![
                Bus::source(0.5, 48.0),
                Bus::load(1.0, 1e-3),
                Bus::source(0.5, 48.0),
                Bus::load(1.0, 1e-3),
            ],
            vec![LineParams::new(0, 1, 0.1, 1e-6), LineParams::new(2, 3, 0.1, 1e-6)],
        );
        let report = g.validate();
        assert!(!report.valid);
        assert_eq!(report.issues, vec![ValidationIssue::NotConnected { components: 2 }]);
        assert!(report.issues[0].to_string().starts_with("not connected"));
    }

    #[test]
    fn validation_collects_every_issue() {
        let g = NetworkGraph::new(
            vec![Bus::load(-1.0, 0.0), Bus::load(1.0, 1e-3)],
            vec![LineParams::new(0, 0, -0.1, 1e-6), LineParams::new(0, 7, 0.1, 0.0)],
        );
        let report = g.validate();
        assert!(!report.valid);
        let has = |pred: &dyn Fn(&ValidationIssue) -> bool| report.issues.iter().any(pred);
        assert!(has(&|i| matches!(i, ValidationIssue::SelfLoop { line: 0, .. })));
        assert!(has(&|i| matches!(i, ValidationIssue::BusOutOfRange { line: 1, bus: 7 })));
        assert!(has(&|i| matches!(i, ValidationIssue::NegativePower { bus: 0, .. })));
        assert!(has(&|i| matches!(i, ValidationIssue::NoSource)));
        assert!(has(&|i| matches!(
            i,
            ValidationIssue::NonPositive { quantity: "capacitance", .. }
        )));
        assert!(has(&|i| matches!(
            i,
            ValidationIssue::NonPositive { quantity: "inductance", .. }
        )));
        assert!(g.ensure_valid().is_err());
    }

    #[test]
    fn parallel_edges_are_allowed() {
        let g = NetworkGraph::new(
            vec![Bus::source(0.5, 48.0), Bus::load(1.0, 1e-3)],
            vec![LineParams::new(0, 1, 0.1, 1e-6), LineParams::new(1, 0, 0.2, 1e-6)],
        );
        assert!(g.validate().valid);
    }

    #[test]
    fn incidence_single_edge() {
        let g = two_bus(0.111);
        assert_eq!(g.incidence_apply(&[48.0, 47.0]).unwrap(), vec![1.0]);
        assert_eq!(g.incidence_transpose_apply(&[2.0]).unwrap(), vec![2.0, -2.0]);
    }

    #[test]
    fn incidence_triangle() {
        let g = triangle();
        assert_eq!(g.incidence_apply(&[3.0, 2.0, 1.0]).unwrap(), vec![1.0, 1.0, 2.0]);
        assert_eq!(
            g.incidence_transpose_apply(&[1.0, 1.0, 1.0]).unwrap(),
            vec![2.0, 0.0, -2.0]
        );
        assert_eq!(g.incidence_apply(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn incidence_dimension_mismatch() {
        let g = triangle();
        assert!(matches!(
            g.incidence_apply(&[1.0, 2.0]),
            Err(GridError::DimensionMismatch { expected: 3, got: 2, .. })
        ));
        assert!(matches!(
            g.incidence_transpose_apply(&[1.0]),
            Err(GridError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tau_max_values() {
        let g = two_bus(0.111);
        assert!((g.tau_max().unwrap() - 55.45e-6).abs() < 1e-15);

        let g = NetworkGraph::new(
            vec![Bus::source(0.5, 48.0), Bus::load(1.0, 1e-3), Bus::load(1.0, 1e-3)],
            vec![
                LineParams::with_time_constant(0, 1, 0.2, 10e-6),
                LineParams::with_time_constant(1, 2, 0.111, 55.45e-6),
            ],
        );
        assert!((g.tau_max().unwrap() - 55.45e-6).abs() < 1e-15);

        let g = NetworkGraph::new(
            vec![Bus::source(0.5, 48.0), Bus::load(1.0, 1e-3)],
            vec![LineParams::new(0, 1, 0.111, 6.155e-6)],
        );
        let tau = g.tau_max().unwrap();
        assert!((tau - 55.45e-6).abs() / 55.45e-6 < 1e-4, "tau = {tau}");

        let empty = NetworkGraph::new(vec![Bus::source(0.5, 48.0)], vec![]);
        assert!(matches!(empty.tau_max(), Err(GridError::NoLines)));
    }

    #[test]
    fn laplacian_matches_incidence_composition() {
        let g = triangle();
        let lap = g.laplacian().unwrap();
        let v = [1.5, -0.25, 3.0];
        let dv = g.incidence_apply(&v).unwrap();
        let i: Vec<f64> = dv.iter().zip(g.lines()).map(|(d, l)| d / l.resistance).collect();
        let via_incidence = g.incidence_transpose_apply(&i).unwrap();
        let via_matrix = &lap * nalgebra::DVector::from_column_slice(&v);
        for k in 0..3 {
            assert!((via_incidence[k] - via_matrix[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn kind_masks_keep_bus_order() {
        let g = NetworkGraph::new(
            vec![
                Bus::load(1.0, 1e-3),
                Bus::source(0.5, 48.0),
                Bus::load(2.0, 1e-3),
                Bus::source(0.4, 48.0),
            ],
            vec![
                LineParams::new(0, 1, 0.1, 1e-6),
                LineParams::new(1, 2, 0.1, 1e-6),
                LineParams::new(2, 3, 0.1, 1e-6),
            ],
        );
        assert_eq!(g.sources(), &[1, 3]);
        assert_eq!(g.loads(), &[0, 2]);
        assert_eq!(g.droop_resistances(), vec![0.5, 0.4]);
        assert_eq!(g.load_powers(), vec![1.0, 0.0, 2.0, 0.0]);
    }
}
