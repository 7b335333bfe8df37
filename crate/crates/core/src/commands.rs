//! The `certify`, `loadflow`, `simulate`, `compare` and `proptest` commands.
//!
//! Each command returns a JSON report and a success flag; the binary maps
//! them to stdout and the exit status.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::certificates::{certify_network, check_existence, DesignEnvelope};
use crate::controllers::ControllerKind;
use crate::dynamics::{initial_state, simulate, steady_state_metrics, SteadyStateMetrics, Trajectory};
use crate::error::{GridError, Result};
use crate::load_flow::{solve_load_flow, LoadFlowOptions, SourceModel};
use crate::output::{failure_text, trajectory_plots, write_csv};
use crate::random::run_implication_suite;
use crate::scenario::ScenarioFile;

pub const DEFAULT_K_I: f64 = 18.02;
pub const DEFAULT_K_V: f64 = 36.04;
pub const DEFAULT_K_LAMBDA: f64 = 0.7508;

/// Trailing window for steady-state metrics, seconds.
pub const METRIC_WINDOW: f64 = 5e-3;

/// Voltage band used for settling observations, volts.
pub const VOLTAGE_BAND: f64 = 0.05;

/// Sharing band used for settling observations.
pub const SHARING_BAND: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ControllerName {
    DroopOnly,
    Uncoordinated,
    StandardSecondary,
    Multipurpose,
}

/// The scenario's controller when it has the requested kind, otherwise the
/// kind with default gains and equal participation factors.
pub fn controller_for(name: ControllerName, scenario: &ScenarioFile, n_sources: usize) -> ControllerKind {
    let current = &scenario.controller;
    match (name, current) {
        (ControllerName::DroopOnly, _) => ControllerKind::DroopOnly,
        (ControllerName::Uncoordinated, ControllerKind::Uncoordinated { .. })
        | (ControllerName::StandardSecondary, ControllerKind::StandardSecondary { .. })
        | (ControllerName::Multipurpose, ControllerKind::Multipurpose { .. }) => current.clone(),
        (ControllerName::Uncoordinated, _) => ControllerKind::Uncoordinated { c_u: 1.0 },
        (ControllerName::StandardSecondary, _) => ControllerKind::StandardSecondary { k_p: 0.0, k_i: DEFAULT_K_I },
        (ControllerName::Multipurpose, _) => ControllerKind::Multipurpose {
            k_v: DEFAULT_K_V,
            k_lambda: DEFAULT_K_LAMBDA,
            lambda: vec![1.0; n_sources],
        },
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub no_plots: bool,
    pub controller: Option<ControllerName>,
}

/// A command's JSON report and whether everything it checked succeeded.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Value,
    pub success: bool,
}

fn echo(scenario: &ScenarioFile) -> Result<Value> {
    Ok(serde_json::to_value(scenario)?)
}

pub fn cmd_certify(scenario: &ScenarioFile) -> Result<Outcome> {
    let graph = scenario.peak_graph()?;
    let cert = certify_network(&graph, scenario.v_ref, scenario.v_min())?;
    Ok(Outcome {
        success: cert.pass,
        report: json!({
            "command": "certify",
            "scenario": echo(scenario)?,
            "certificate": cert,
        }),
    })
}

pub fn cmd_loadflow(scenario: &ScenarioFile) -> Result<Outcome> {
    let graph = scenario.final_graph()?;
    let sol = solve_load_flow(&graph, scenario.v_ref, &SourceModel::Pinned, LoadFlowOptions::default())?;
    let mut report = json!({
        "command": "loadflow",
        "scenario": echo(scenario)?,
        "solution": sol,
        "injected_power": sol.injected_power(&graph)?,
    });
    if !sol.converged {
        let env = DesignEnvelope::from_graph(&graph, scenario.v_ref, scenario.v_min())?;
        let message = if check_existence(&env).pass {
            "load flow did not converge"
        } else {
            "no equilibrium: existence bound exceeded"
        };
        report["error"] = json!(message);
    }
    Ok(Outcome {
        success: sol.converged,
        report,
    })
}

/// Output directory from the options, else the scenario's own setting.
pub fn output_dir(scenario: &ScenarioFile, opts: &RunOptions) -> PathBuf {
    opts.out.clone().unwrap_or_else(|| scenario.output.dir.clone())
}

#[derive(Clone, Debug, Serialize)]
pub struct Settling {
    /// Last time `|v̄ − v_ref|` was outside the voltage band.
    pub voltage_last_outside: Option<f64>,
    /// Last time the sharing error was outside the sharing band.
    pub sharing_last_outside: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub controller: &'static str,
    pub csv: PathBuf,
    pub plots: Vec<PathBuf>,
    pub samples: usize,
    pub t_final: f64,
    pub steps: usize,
    pub rejections: usize,
    pub metrics: Option<SteadyStateMetrics>,
    pub settling: Settling,
    pub failure: Option<String>,
    pub warnings: Vec<String>,
}

fn settling(traj: &Trajectory) -> Settling {
    let mut voltage = None;
    let mut sharing = None;
    for s in &traj.samples {
        if (s.v_bar - traj.v_ref).abs() > VOLTAGE_BAND {
            voltage = Some(s.t);
        }
        let err = if s.p_bar > 0.0 {
            s.source_power
                .iter()
                .zip(&traj.lambda)
                .map(|(p, l)| (p - l * s.p_bar).abs())
                .fold(0.0, f64::max)
                / s.p_bar
        } else {
            0.0
        };
        if err > SHARING_BAND {
            sharing = Some(s.t);
        }
    }
    Settling {
        voltage_last_outside: voltage,
        sharing_last_outside: sharing,
    }
}

/// Simulates `kind` on the scenario and writes `<controller>.csv` plus plots.
pub fn run_and_write(
    scenario: &ScenarioFile,
    kind: &ControllerKind,
    dir: &Path,
    plots: bool,
) -> Result<(Trajectory, RunSummary)> {
    let graph = scenario.graph()?;
    let init = initial_state(&graph, scenario.v_ref, scenario.sim.initial)?;
    let traj = simulate(&graph, kind, scenario.v_ref, &scenario.events(), &scenario.sim.config(), &init)?;
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", kind.name()));
    write_csv(&traj, BufWriter::new(fs::File::create(&csv)?))?;
    let mut plot_paths = Vec::new();
    if plots {
        for (file, svg) in trajectory_plots(&traj) {
            let path = dir.join(format!("{}_{file}", kind.name()));
            fs::write(&path, svg)?;
            plot_paths.push(path);
        }
    }
    let window = METRIC_WINDOW.min(traj.duration());
    let metrics = if window > 0.0 {
        steady_state_metrics(&traj, window).ok()
    } else {
        None
    };
    let summary = RunSummary {
        controller: kind.name(),
        csv,
        plots: plot_paths,
        samples: traj.samples.len(),
        t_final: traj.last().t,
        steps: traj.stats.steps,
        rejections: traj.stats.rejections,
        metrics,
        settling: settling(&traj),
        failure: traj.failure.as_ref().map(failure_text),
        warnings: kind.lambda_warning().into_iter().collect(),
    };
    Ok((traj, summary))
}

pub fn cmd_simulate(scenario: &ScenarioFile, opts: &RunOptions) -> Result<Outcome> {
    let n_s = scenario.graph()?.sources().len();
    let kind = match opts.controller {
        Some(name) => controller_for(name, scenario, n_s),
        None => scenario.controller.clone(),
    };
    let dir = output_dir(scenario, opts);
    let plots = scenario.output.plots && !opts.no_plots;
    let (_, summary) = run_and_write(scenario, &kind, &dir, plots)?;
    Ok(Outcome {
        success: summary.failure.is_none(),
        report: json!({
            "command": "simulate",
            "scenario": echo(scenario)?,
            "controller": kind,
            "run": summary,
        }),
    })
}

/// Runs the standard secondary and multipurpose laws side by side.
pub fn cmd_compare(scenario: &ScenarioFile, opts: &RunOptions) -> Result<Outcome> {
    let n_s = scenario.graph()?.sources().len();
    let kinds = [
        controller_for(ControllerName::StandardSecondary, scenario, n_s),
        controller_for(ControllerName::Multipurpose, scenario, n_s),
    ];
    let dir = output_dir(scenario, opts);
    let plots = scenario.output.plots && !opts.no_plots;
    let results: Vec<Result<(Trajectory, RunSummary)>> = std::thread::scope(|s| {
        let handles: Vec<_> = kinds
            .iter()
            .map(|k| s.spawn(|| run_and_write(scenario, k, &dir, plots)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(GridError::param("compare", "simulation thread panicked"))))
            .collect()
    });
    let mut runs = Vec::new();
    for r in results {
        runs.push(r?.1);
    }
    let success = runs.iter().all(|r| r.failure.is_none());
    Ok(Outcome {
        success,
        report: json!({
            "command": "compare",
            "scenario": echo(scenario)?,
            "controllers": kinds,
            "runs": runs,
        }),
    })
}

pub fn cmd_proptest(seed: u64, count: usize) -> Result<Outcome> {
    let summary = run_implication_suite(seed, count)?;
    Ok(Outcome {
        success: summary.pass(),
        report: json!({ "command": "proptest", "summary": summary }),
    })
}
