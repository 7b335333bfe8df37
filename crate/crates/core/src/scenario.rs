//! Scenario files: network, controller, load events, and run settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerKind;
use crate::dynamics::{Event, InitialCondition, SimConfig};
use crate::error::{GridError, Result};
use crate::network::{Bus, LineParams, NetworkGraph};

pub const SCHEMA_VERSION: u32 = 1;

/// Default `v_min` as a fraction of `v_ref`.
pub const DEFAULT_V_MIN_PU: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub v_ref: f64,
    #[serde(default)]
    pub v_min: Option<f64>,
    pub buses: Vec<BusSpec>,
    pub lines: Vec<LineSpec>,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_controller() -> ControllerKind {
    ControllerKind::DroopOnly
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BusSpec {
    Source {
        droop_resistance: f64,
        #[serde(default)]
        initial_setpoint: Option<f64>,
    },
    Load {
        /// Power drawn at t = 0, watts.
        power: f64,
        capacitance: f64,
    },
}

/// A line given by inductance or by time constant `L/R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    pub resistance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inductance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_constant: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub time: f64,
    pub target: usize,
    pub new_power: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub t_end: f64,
    pub max_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_interval: f64,
    pub initial: InitialCondition,
}

impl Default for SimSpec {
    fn default() -> Self {
        let c = SimConfig::default();
        SimSpec {
            t_end: c.t_end,
            max_step: c.max_step,
            rel_tol: c.rel_tol,
            abs_tol: c.abs_tol,
            sample_interval: c.sample_interval,
            initial: InitialCondition::Equilibrium,
        }
    }
}

impl SimSpec {
    pub fn config(&self) -> SimConfig {
        SimConfig {
            t_end: self.t_end,
            max_step: self.max_step,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            sample_interval: self.sample_interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub plots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            plots: true,
        }
    }
}

impl ScenarioFile {
    /// Parses JSON text, fills defaults, and validates the result.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            GridError::scenario(
                e.path().to_string(),
                format!("{} (line {}, column {})", inner, inner.line(), inner.column()),
            )
        })?;
        file.fill_defaults();
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Makes every implicit value explicit. Lines given by time constant are
    /// rewritten with their inductance.
    pub fn fill_defaults(&mut self) {
        if self.v_min.is_none() {
            self.v_min = Some(DEFAULT_V_MIN_PU * self.v_ref);
        }
        for b in &mut self.buses {
            if let BusSpec::Source { initial_setpoint, .. } = b {
                initial_setpoint.get_or_insert(self.v_ref);
            }
        }
        for l in &mut self.lines {
            if let (None, Some(tau)) = (l.inductance, l.time_constant) {
                l.inductance = Some(tau * l.resistance);
                l.time_constant = None;
            }
        }
    }

    pub fn v_min(&self) -> f64 {
        self.v_min.unwrap_or(DEFAULT_V_MIN_PU * self.v_ref)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(GridError::scenario(
                "schema",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema),
            ));
        }
        if !(self.v_ref > 0.0 && self.v_ref.is_finite()) {
            return Err(GridError::scenario("v_ref", "must be positive"));
        }
        let v_min = self.v_min();
        if !(v_min > 0.0 && v_min < self.v_ref) {
            return Err(GridError::scenario("v_min", "must lie in (0, v_ref)"));
        }
        for (a, l) in self.lines.iter().enumerate() {
            match (l.inductance, l.time_constant) {
                (Some(_), Some(_)) => {
                    return Err(GridError::scenario(
                        format!("lines[{a}]"),
                        "give either inductance or time_constant, not both",
                    ))
                }
                (None, None) => {
                    return Err(GridError::scenario(format!("lines[{a}]"), "missing inductance or time_constant"))
                }
                _ => {}
            }
        }
        let graph = self.graph()?;
        let report = graph.validate();
        if !report.valid {
            return Err(GridError::InvalidNetwork(report.issues));
        }
        self.controller
            .validate(graph.sources().len())
            .map_err(|e| GridError::scenario("controller", e.to_string()))?;
        let sim = self.sim.config();
        sim.validate().map_err(|e| GridError::scenario("sim", e.to_string()))?;
        for (j, e) in self.events().iter().enumerate() {
            let field = format!("events[{j}]");
            if e.target >= graph.n() {
                return Err(GridError::scenario(field, format!("bus {} does not exist", e.target)));
            }
            if graph.load_params(e.target).is_none() {
                return Err(GridError::scenario(field, "event target is not a load"));
            }
            e.validate(&graph).map_err(|err| GridError::scenario(field.clone(), err.to_string()))?;
            if e.time >= sim.t_end {
                return Err(GridError::scenario(field, "event time must be before t_end"));
            }
        }
        Ok(())
    }

    /// The network with t = 0 load powers.
    pub fn graph(&self) -> Result<NetworkGraph> {
        let buses = self
            .buses
            .iter()
            .map(|b| match *b {
                BusSpec::Source {
                    droop_resistance,
                    initial_setpoint,
                } => Bus::source(droop_resistance, initial_setpoint.unwrap_or(self.v_ref)),
                BusSpec::Load { power, capacitance } => Bus::load(power, capacitance),
            })
            .collect();
        let lines = self
            .lines
            .iter()
            .map(|l| match (l.inductance, l.time_constant) {
                (Some(ind), _) => LineParams::new(l.from, l.to, l.resistance, ind),
                (None, Some(tau)) => LineParams::with_time_constant(l.from, l.to, l.resistance, tau),
                (None, None) => LineParams::new(l.from, l.to, l.resistance, f64::NAN),
            })
            .collect();
        Ok(NetworkGraph::new(buses, lines))
    }

    pub fn events(&self) -> Vec<Event> {
        self.events
            .iter()
            .map(|e| Event {
                time: e.time,
                target: e.target,
                new_power: e.new_power,
            })
            .collect()
    }

    /// The network after every event has been applied in time order.
    pub fn final_graph(&self) -> Result<NetworkGraph> {
        let mut events = self.events();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut g = self.graph()?;
        for e in events {
            g = g.with_load_power(e.target, e.new_power)?;
        }
        Ok(g)
    }

    /// The network with every load at the largest power it draws during the run.
    pub fn peak_graph(&self) -> Result<NetworkGraph> {
        let g = self.graph()?;
        let mut p = g.load_powers();
        for e in &self.events {
            p[e.target] = p[e.target].max(e.new_power);
        }
        g.with_load_powers(&p)
    }
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GridError::scenario(path.display().to_string(), e.to_string()))?;
    ScenarioFile::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "schema": 1,
        "v_ref": 48.0,
        "buses": [
            {"kind": "source", "droop_resistance": 0.5},
            {"kind": "load", "power": 35.11, "capacitance": 845.7e-6}
        ],
        "lines": [{"from": 0, "to": 1, "resistance": 0.111, "time_constant": 55.45e-6}]
    }"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = ScenarioFile::from_json(TWO_BUS).unwrap();
        assert_eq!(s.v_min, Some(0.95 * 48.0));
        assert_eq!(s.controller, ControllerKind::DroopOnly);
        assert_eq!(s.sim, SimSpec::default());
        assert!(s.output.plots);
        assert!(matches!(s.buses[0], BusSpec::Source { initial_setpoint: Some(x), .. } if x == 48.0));
        let l = &s.lines[0];
        assert!((l.inductance.unwrap() - 0.111 * 55.45e-6).abs() < 1e-18);
        assert_eq!(l.time_constant, None);
    }

    #[test]
    fn round_trip_is_identity() {
        let s = ScenarioFile::from_json(TWO_BUS).unwrap();
        let again = ScenarioFile::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn event_on_source_is_rejected() {
        let text = TWO_BUS.replace(
            r#""lines""#,
            r#""events": [{"time": 0.01, "target": 0, "new_power": 5.0}], "lines""#,
        );
        let msg = ScenarioFile::from_json(&text).unwrap_err().to_string();
        assert!(msg.contains("event target is not a load"), "{msg}");
        assert!(msg.contains("events[0]"), "{msg}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = TWO_BUS.replace(r#""resistance": 0.111"#, r#""resistance": "high""#);
        let msg = ScenarioFile::from_json(&text).unwrap_err().to_string();
        assert!(msg.contains("lines[0].resistance"), "{msg}");
        assert!(msg.contains("line "), "{msg}");
    }

    #[test]
    fn late_event_is_rejected() {
        let text = TWO_BUS.replace(
            r#""lines""#,
            r#""events": [{"time": 0.2, "target": 1, "new_power": 5.0}], "lines""#,
        );
        assert!(ScenarioFile::from_json(&text).is_err());
    }

    #[test]
    fn peak_and_final_graphs() {
        let text = TWO_BUS.replace(
            r#""lines""#,
            r#""events": [{"time": 0.02, "target": 1, "new_power": 1.0}, {"time": 0.01, "target": 1, "new_power": 50.0}], "lines""#,
        );
        let s = ScenarioFile::from_json(&text).unwrap();
        assert_eq!(s.final_graph().unwrap().load_powers()[1], 1.0);
        assert_eq!(s.peak_graph().unwrap().load_powers()[1], 50.0);
    }
}
