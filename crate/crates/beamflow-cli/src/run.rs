//! `run`: integrate a scenario and emit the trajectory, the initial/final
//! achieved patterns, and a JSON summary.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;

use beamflow_core::model::achieved_magnitudes;
use beamflow_core::{integrate, Trajectory};

use crate::config;
use crate::error::CliError;
use crate::io::{self, AgentFinal, ObjectiveBreakdown, RunSummary};

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Scenario config file (TOML).
    pub scenario: PathBuf,

    /// Directory for the output files (created if absent).
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,

    /// Override the scenario's random seed (beats BEAMFLOW_SEED).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Override the scenario's snapshot stride.
    #[arg(long)]
    pub stride: Option<usize>,

    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,

    /// Skip trajectory.csv.
    #[arg(long)]
    pub no_trajectory: bool,

    /// Skip pattern_initial.csv and pattern_final.csv.
    #[arg(long)]
    pub no_pattern: bool,

    /// Skip summary.json.
    #[arg(long)]
    pub no_summary: bool,
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let mut scenario = config::load_scenario(&args.scenario, args.seed)?;
    if let Some(stride) = args.stride {
        if stride == 0 {
            return Err(CliError::Validation("--stride must be >= 1".into()));
        }
        scenario.snapshot_stride = stride;
    }

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let planned = planned_files(args);
    for path in &planned {
        io::guard_overwrite(path, args.force)?;
    }

    let started = Instant::now();
    let trajectory = integrate(&scenario)?;
    let wall = started.elapsed();
    // Wall time is deliberately not part of summary.json: identical runs
    // must produce byte-identical files.
    eprintln!("integration wall time: {:.3} s", wall.as_secs_f64());

    for warning in &trajectory.warnings {
        eprintln!("warning: {warning}");
    }

    if !args.no_trajectory {
        io::write_trajectory(&args.out_dir.join("trajectory.csv"), &trajectory.samples)?;
    }
    if !args.no_pattern {
        let initial = &trajectory.samples.first().expect("trajectory always has a sample").agents;
        let achieved_initial =
            achieved_magnitudes(initial, &scenario.grid, &scenario.constants, scenario.min_distance);
        io::write_pattern(&args.out_dir.join("pattern_initial.csv"), &scenario.grid, &achieved_initial)?;
        let achieved_final = achieved_magnitudes(
            &trajectory.final_state.agents,
            &scenario.grid,
            &scenario.constants,
            scenario.min_distance,
        );
        io::write_pattern(&args.out_dir.join("pattern_final.csv"), &scenario.grid, &achieved_final)?;
    }
    if !args.no_summary {
        io::write_summary(&args.out_dir.join("summary.json"), &summarize(&trajectory))?;
    }

    let initial = trajectory.final_state.objective_history.first().expect("history is never empty");
    let last = trajectory.final_state.objective_history.last().expect("history is never empty");
    println!("stopped: {} at t = {}", trajectory.stop_reason, trajectory.final_state.t);
    println!(
        "steps: {} fast ({} rejected), {} slow",
        trajectory.fast_steps, trajectory.rejected_steps, trajectory.slow_steps
    );
    println!("pattern mismatch: {:.6e} -> {:.6e}", initial.1.pattern_term, last.1.pattern_term);
    println!("outputs in {}", args.out_dir.display());
    Ok(())
}

fn planned_files(args: &RunArgs) -> Vec<PathBuf> {
    let mut planned = Vec::new();
    if !args.no_trajectory {
        planned.push(args.out_dir.join("trajectory.csv"));
    }
    if !args.no_pattern {
        planned.push(args.out_dir.join("pattern_initial.csv"));
        planned.push(args.out_dir.join("pattern_final.csv"));
    }
    if !args.no_summary {
        planned.push(args.out_dir.join("summary.json"));
    }
    planned
}

/// Builds the JSON summary from a finished trajectory.
pub fn summarize(trajectory: &Trajectory) -> RunSummary {
    let history = &trajectory.final_state.objective_history;
    let breakdown = |value: &beamflow_core::ObjectiveValue| ObjectiveBreakdown {
        pattern_term: value.pattern_term,
        motion_term: value.motion_term,
        total: value.total,
    };
    RunSummary {
        stop_reason: trajectory.stop_reason.to_string(),
        fast_steps: trajectory.fast_steps,
        slow_steps: trajectory.slow_steps,
        rejected_steps: trajectory.rejected_steps,
        initial: breakdown(&history.first().expect("history is never empty").1),
        r#final: breakdown(&history.last().expect("history is never empty").1),
        agents: trajectory
            .final_state
            .agents
            .iter()
            .map(|a| AgentFinal {
                amplitude: a.amplitude,
                phase_mod_2pi: a.phase.rem_euclid(std::f64::consts::TAU),
                position: [a.position.x, a.position.y],
            })
            .collect(),
        warnings: trajectory.warnings.clone(),
    }
}
