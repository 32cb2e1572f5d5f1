//! End-to-end demonstration on the stock reference scenario: relax the
//! excitations with frozen positions first, then run the full two time-scale
//! flow and summarize how well the achieved pattern matches the target.
//!
//! ```text
//! cargo run --example reference_run [seed]
//! ```

use std::time::Instant;

use beamflow_core::dynamics::{FastEngine, FastScratch};
use beamflow_core::model::{achieved_magnitudes, pattern_term};
use beamflow_core::{integrate, reference_scenario};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let scenario = reference_scenario(seed);
    let d_min = scenario.min_distance;

    println!("reference scenario, seed {seed}");
    println!("  grid: {} points, desired peak {:.4}", scenario.grid.len(), scenario.grid.peak_target());
    for (m, agent) in scenario.agents.iter().enumerate() {
        println!(
            "  agent {m}: position ({:+.3}, {:+.3}), phase {:.3}",
            agent.position.x, agent.position.y, agent.phase
        );
    }

    // Excitation-only relaxation with frozen positions.
    let engine = FastEngine::new(&scenario.agents, &scenario.grid, &scenario.constants, d_min);
    let mut amplitudes = scenario.amplitudes();
    let mut phases = scenario.phases();
    let mut scratch = FastScratch::new(scenario.agent_count());
    let rate = scenario.fast_step / scenario.epsilon;
    let started = Instant::now();
    let report = engine.run(&mut amplitudes, &mut phases, rate, 10_000, 0.0, &mut scratch);
    println!(
        "frozen-position relaxation: {:.6} -> {:.6} ({:.2}% left) in {} steps, {} rejections, {:.2?}",
        report.initial_objective,
        report.final_objective,
        100.0 * report.final_objective / report.initial_objective,
        report.steps,
        report.rejections,
        started.elapsed()
    );

    // Full two time-scale run.
    let started = Instant::now();
    let trajectory = integrate(&scenario).expect("reference scenario is valid");
    let elapsed = started.elapsed();
    let history = &trajectory.final_state.objective_history;
    let initial = history.first().unwrap().1;
    let final_ = history.last().unwrap().1;
    println!(
        "two time-scale run: stopped '{}' at t = {:.2} after {} fast / {} slow steps ({:.2?})",
        trajectory.stop_reason, trajectory.final_state.t, trajectory.fast_steps,
        trajectory.slow_steps, elapsed
    );
    println!(
        "  pattern term {:.6} -> {:.6} ({:.3}% of initial)",
        initial.pattern_term,
        final_.pattern_term,
        100.0 * final_.pattern_term / initial.pattern_term
    );
    println!("  motion term {:.6}, total {:.6}", final_.motion_term, final_.total);

    let final_phi = pattern_term(
        &trajectory.final_state.agents,
        &scenario.grid,
        &scenario.constants,
        d_min,
    );
    let achieved = achieved_magnitudes(
        &trajectory.final_state.agents,
        &scenario.grid,
        &scenario.constants,
        d_min,
    );
    let mse: f64 = (0..scenario.grid.len())
        .map(|i| {
            let e = achieved[i] - scenario.grid.target(i);
            e * e
        })
        .sum::<f64>()
        / scenario.grid.len() as f64;
    println!(
        "  final mismatch {:.6}, rms error {:.4} ({:.2}% of desired peak)",
        final_phi,
        mse.sqrt(),
        100.0 * mse.sqrt() / scenario.grid.peak_target()
    );

    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0usize;
    for d in &trajectory.fast_decay {
        if d.end_norm <= scenario.tol_fast {
            continue;
        }
        let ratio = d.end_norm / d.start_norm;
        if ratio > worst_ratio {
            worst_ratio = ratio;
        }
        if ratio > 1e-3 {
            violations += 1;
        }
    }
    println!(
        "  fast-gradient decay: worst end/start ratio {:.3e}, {} of {} sub-sequences above 1e-3",
        worst_ratio,
        violations,
        trajectory.fast_decay.len()
    );
    for w in &trajectory.warnings {
        println!("  warning: {w}");
    }
    let final_agents = &trajectory.final_state.agents;
    for (m, agent) in final_agents.iter().enumerate() {
        println!(
            "  agent {m}: a = {:.4}, alpha mod 2pi = {:.4}, position ({:+.3}, {:+.3}), drift {:.3}",
            agent.amplitude,
            agent.phase.rem_euclid(2.0 * std::f64::consts::PI),
            agent.position.x,
            agent.position.y,
            (agent.position - agent.anchor).norm()
        );
    }
}
