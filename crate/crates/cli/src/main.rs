use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pneuhex_core::harness::{compare_to_reference, run, Episode, ExperimentKind, Reference, Scenario};

#[derive(Parser)]
#[command(name = "pneuhex", version, about = "Run soft hexapod experiments in simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the pressure models to calibration samples
    Fit(RunArgs),
    /// Step response of one pressure channel
    StepResponse(RunArgs),
    /// Body height control at fixed stance
    Height(RunArgs),
    /// Body roll control at fixed stance
    Roll(RunArgs),
    /// Closed-loop straight line tracking
    TrackLine(RunArgs),
    /// Closed-loop quarter circle tracking
    TrackCircle(RunArgs),
    /// Line tracking with a height switch
    TrackVarheight(RunArgs),
    /// Heading change per turning sequence and walking speed
    TurnCal(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML; the built-in preset is used when omitted
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory for CSV logs and statistics
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Reference statistics TOML; the exit code reports the comparison
    #[arg(long)]
    reference: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Fit(a) => (ExperimentKind::Fit, a),
            Command::StepResponse(a) => (ExperimentKind::StepResponse, a),
            Command::Height(a) => (ExperimentKind::HeightControl, a),
            Command::Roll(a) => (ExperimentKind::RollControl, a),
            Command::TrackLine(a) => (ExperimentKind::TrackLine, a),
            Command::TrackCircle(a) => (ExperimentKind::TrackCircle, a),
            Command::TrackVarheight(a) => (ExperimentKind::TrackVarheight, a),
            Command::TurnCal(a) => (ExperimentKind::TurnCalibration, a),
        }
    }
}

fn load_scenario(kind: ExperimentKind, args: &RunArgs) -> Result<Scenario> {
    let mut s = match &args.scenario {
        Some(path) => {
            let s = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
            if s.kind != kind {
                bail!("{} describes a {} run, not {kind}", path.display(), s.kind);
            }
            s
        }
        None => Scenario::preset(kind),
    };
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn summarize(ep: &Episode) {
    for t in &ep.trials {
        if t.decisions.is_empty() && t.cycles.is_empty() {
            continue;
        }
        println!(
            "{}: {:.2} s, {} cycles, stop {}, final ({:.3}, {:.3}) m, turns fired {}",
            t.label,
            t.sim_time_s,
            t.cycles.len(),
            if t.stop_reached { "reached" } else { "not reached" },
            t.final_pose.x_m,
            t.final_pose.y_m,
            t.turns_fired()
        );
    }
    for s in &ep.stats {
        println!("{s}");
    }
}

fn execute(kind: ExperimentKind, args: RunArgs) -> Result<bool> {
    let scenario = load_scenario(kind, &args)?;
    let episode = run(&scenario).with_context(|| format!("running {kind}"))?;
    let out = args.out.clone().unwrap_or_else(|| Path::new("out").join(kind.as_str()));
    let files = episode.write(&out).with_context(|| format!("writing {}", out.display()))?;
    summarize(&episode);
    println!("wrote {} files to {}", files.len(), out.display());
    let Some(path) = &args.reference else {
        return Ok(true);
    };
    let reference = Reference::load(path).with_context(|| format!("loading {}", path.display()))?;
    let report = compare_to_reference(&episode.stats, &reference);
    print!("{report}");
    Ok(report.passed())
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
