use std::path::PathBuf;
use std::process::ExitCode;

use adhocgrid::commands::{self, ControllerName, Outcome, RunOptions};
use adhocgrid::scenario::parse_scenario;
use adhocgrid::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Stability certificates and simulation for ad hoc DC microgrids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the design rules and the topology-aware conditions.
    Certify(ScenarioArg),
    /// Solve for the operating point with sources pinned at v_ref.
    Loadflow(ScenarioArg),
    /// Simulate the scenario and write CSV and SVG output.
    Simulate(RunArgs),
    /// Simulate the standard and multipurpose secondary laws side by side.
    Compare(RunArgs),
    /// Check random certified networks against the topology-aware conditions.
    Proptest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
}

#[derive(Args)]
struct ScenarioArg {
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, env = "ADHOCGRID_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    no_plots: bool,
    /// Override the scenario's controller.
    #[arg(long, value_enum)]
    controller: Option<ControllerName>,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            out: self.out.clone(),
            no_plots: self.no_plots,
            controller: self.controller,
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Certify(a) => commands::cmd_certify(&parse_scenario(&a.scenario)?),
        Command::Loadflow(a) => commands::cmd_loadflow(&parse_scenario(&a.scenario)?),
        Command::Simulate(a) => commands::cmd_simulate(&parse_scenario(&a.scenario)?, &a.options()),
        Command::Compare(a) => commands::cmd_compare(&parse_scenario(&a.scenario)?, &a.options()),
        Command::Proptest { seed, count } => commands::cmd_proptest(seed, count),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome { report, success: true }) => {
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Ok(Outcome { report, success: false }) => {
            eprintln!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::from(2)
        }
    }
}
