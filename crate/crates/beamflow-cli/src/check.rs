//! `check-gradients`: compare the analytic mismatch gradients against
//! central finite differences on the scenario's own state and on seeded
//! random restates of it. Exits 3 if any family disagrees.

use std::path::PathBuf;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use beamflow_core::gradients::FD_BASE_STEP;
use beamflow_core::{fd_gradient, grid_gradient, pattern_term, Scenario, Vec2};

use crate::config;
use crate::error::CliError;

/// A gradient family fails the check at this relative disagreement.
pub const CHECK_TOLERANCE: f64 = 1e-5;

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Scenario config file (TOML).
    pub scenario: PathBuf,

    /// Number of states to test: the scenario's own state, then seeded
    /// random restates of it.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,

    /// Override the scenario's random seed (beats BEAMFLOW_SEED).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Side of the square the random restates draw positions from,
    /// in wavelengths.
    #[arg(long, default_value_t = 2.0)]
    pub square_side_wavelengths: f64,

    /// Negative control: corrupt the analytic amplitude gradient before
    /// comparing, to prove the checker can fail.
    #[arg(long)]
    pub corrupt: bool,
}

struct FamilyReport {
    name: &'static str,
    max_error: f64,
}

pub fn run(args: &CheckArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Validation("--trials must be >= 1".into()));
    }
    let scenario = config::load_scenario(&args.scenario, args.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let side = args.square_side_wavelengths * scenario.constants.wavelength;

    let mut families = [
        FamilyReport { name: "amplitude", max_error: 0.0 },
        FamilyReport { name: "phase", max_error: 0.0 },
        FamilyReport { name: "position", max_error: 0.0 },
    ];

    for trial in 0..args.trials {
        let mut probe = scenario.clone();
        if trial > 0 {
            restate(&mut probe, side, &mut rng);
        }
        let errors = compare_families(&probe, args.corrupt);
        for (report, err) in families.iter_mut().zip(errors) {
            report.max_error = report.max_error.max(err);
        }
    }

    let mut failed = Vec::new();
    for report in &families {
        let verdict = if report.max_error < CHECK_TOLERANCE { "pass" } else { "FAIL" };
        println!(
            "{:<9} max relative error {:.3e} ({verdict}, tolerance {CHECK_TOLERANCE:.0e})",
            report.name, report.max_error
        );
        if report.max_error >= CHECK_TOLERANCE {
            failed.push(report.name);
        }
    }
    if !failed.is_empty() {
        return Err(CliError::Check(format!(
            "analytic and finite-difference gradients disagree: {}",
            failed.join(", ")
        )));
    }
    println!("all gradient families agree over {} state(s)", args.trials);
    Ok(())
}

/// Re-draws amplitudes, phases, and positions; keeps gains and the grid.
fn restate(scenario: &mut Scenario, side: f64, rng: &mut ChaCha8Rng) {
    for agent in &mut scenario.agents {
        agent.amplitude = 0.1 + 1.9 * rng.gen::<f64>();
        agent.phase = std::f64::consts::TAU * rng.gen::<f64>();
        let x = side * (rng.gen::<f64>() - 0.5);
        let y = side * (rng.gen::<f64>() - 0.5);
        agent.position = Vec2::new(x, y);
        agent.anchor = agent.position;
    }
}

/// Relative disagreement per family at one state, as a vector-norm ratio.
fn compare_families(scenario: &Scenario, corrupt: bool) -> [f64; 3] {
    let agents = &scenario.agents;
    let grid = &scenario.grid;
    let constants = &scenario.constants;
    let d_min = scenario.min_distance;

    let mut analytic = grid_gradient(agents, grid, constants, d_min);
    if corrupt {
        analytic.amplitude[0] += 1e-3 * (1.0 + analytic.amplitude[0].abs());
    } else if pattern_term(agents, grid, constants, d_min) == 0.0 {
        // An exactly matched pattern is the global minimum of a sum of
        // squares: every residual is zero, so every analytic gradient
        // vanishes identically, and a central difference there measures
        // nothing but curvature noise. The families agree on zero; running
        // the quotients would divide that noise by the 1e-8 floor and turn
        // exact agreement into a spurious failure.
        return [0.0; 3];
    }

    let amplitudes: Vec<f64> = agents.iter().map(|a| a.amplitude).collect();
    let fd_amplitude = fd_gradient(
        |x| {
            let mut probe = agents.clone();
            for (a, v) in probe.iter_mut().zip(x) {
                a.amplitude = *v;
            }
            pattern_term(&probe, grid, constants, d_min)
        },
        &amplitudes,
        FD_BASE_STEP,
    );

    let phases: Vec<f64> = agents.iter().map(|a| a.phase).collect();
    let fd_phase = fd_gradient(
        |x| {
            let mut probe = agents.clone();
            for (a, v) in probe.iter_mut().zip(x) {
                a.phase = *v;
            }
            pattern_term(&probe, grid, constants, d_min)
        },
        &phases,
        FD_BASE_STEP,
    );

    let coords: Vec<f64> = agents.iter().flat_map(|a| [a.position.x, a.position.y]).collect();
    let fd_position = fd_gradient(
        |x| {
            let mut probe = agents.clone();
            for (m, a) in probe.iter_mut().enumerate() {
                a.position = Vec2::new(x[2 * m], x[2 * m + 1]);
            }
            pattern_term(&probe, grid, constants, d_min)
        },
        &coords,
        FD_BASE_STEP,
    );

    let flat_position: Vec<f64> = analytic.position.iter().flat_map(|p| [p.x, p.y]).collect();
    [
        relative_gap(&analytic.amplitude, &fd_amplitude),
        relative_gap(&analytic.phase, &fd_phase),
        relative_gap(&flat_position, &fd_position),
    ]
}

/// ||a - b|| / max(||b||, 1e-8): a whole-family relative error that stays
/// meaningful when individual components pass through zero.
fn relative_gap(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 =
        analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use beamflow_core::scenario::reference_scenario;

    #[test]
    fn families_agree_on_a_random_state() {
        let mut scenario = reference_scenario(17);
        // Shrink the grid so the finite differences stay cheap.
        let points: Vec<(f64, f64)> =
            (0..24).map(|j| (9.0, std::f64::consts::TAU * j as f64 / 24.0)).collect();
        let targets: Vec<f64> = (0..24).map(|j| 0.3 + 0.01 * j as f64).collect();
        scenario.grid = beamflow_core::SampleGrid::new(points, targets).expect("grid");
        let [a, p, r] = compare_families(&scenario, false);
        assert!(a < CHECK_TOLERANCE, "amplitude family off by {a:e}");
        assert!(p < CHECK_TOLERANCE, "phase family off by {p:e}");
        assert!(r < CHECK_TOLERANCE, "position family off by {r:e}");
        let [corrupted, _, _] = compare_families(&scenario, true);
        assert!(corrupted >= CHECK_TOLERANCE, "corruption must trip the check, got {corrupted:e}");
    }

    #[test]
    fn matched_targets_report_zero_disagreement() {
        let mut scenario = reference_scenario(23);
        let points: Vec<(f64, f64)> =
            (0..24).map(|j| (9.0, std::f64::consts::TAU * j as f64 / 24.0)).collect();
        let placeholder = vec![1.0; 24];
        scenario.grid =
            beamflow_core::SampleGrid::new(points.clone(), placeholder).expect("grid");
        let matched = beamflow_core::model::achieved_magnitudes(
            &scenario.agents,
            &scenario.grid,
            &scenario.constants,
            scenario.min_distance,
        );
        scenario.grid = beamflow_core::SampleGrid::new(points, matched).expect("grid");

        // At the global minimum every analytic gradient vanishes exactly and
        // the finite differences see only rounding noise; the families must
        // agree on zero rather than fail on a noise-over-noise ratio.
        assert_eq!(compare_families(&scenario, false), [0.0; 3]);
        let [corrupted, _, _] = compare_families(&scenario, true);
        assert!(
            corrupted >= CHECK_TOLERANCE,
            "corruption at a stationary point must still trip the check, got {corrupted:e}"
        );
    }
}
