//! Scenario files: a sectioned key-value (TOML) schema and its assembly into
//! a [`Scenario`]. Every numeric default matches the library's, and assembly
//! routes through the same constructors the library uses, so a config that
//! spells out the stock reference values reproduces the stock scenario
//! bit for bit.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use beamflow_core::model::Integrator;
use beamflow_core::pattern::{DesiredPatternSpec, GridSpec, PatternMode};
use beamflow_core::scenario::{
    self, default_fast_step, random_agents, GainModel, DEFAULT_EPSILON, DEFAULT_SLOW_STEP,
    DEFAULT_SQUARE_SIDE_WAVELENGTHS, DEFAULT_TOLERANCE, MIN_DISTANCE_WAVELENGTH_FRACTION,
};
use beamflow_core::{
    binomial_taper, desired_pattern, make_esla, validate_scenario, AgentState, MotionPenalty,
    PhysicalConstants, SampleGrid, Scenario, Sym2, Vec2,
};

use crate::error::CliError;
use crate::io;

/// Environment variable that overrides the configured seed (CI determinism).
pub const SEED_ENV_VAR: &str = "BEAMFLOW_SEED";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    constants: ConstantsSection,
    #[serde(default)]
    agents: Option<AgentsSection>,
    /// Explicit agent list; takes precedence over random generation.
    #[serde(default, rename = "agent")]
    agent_rows: Vec<AgentRow>,
    #[serde(default)]
    desired: Option<DesiredSection>,
    grid: GridSection,
    #[serde(default)]
    penalty: PenaltySection,
    #[serde(default)]
    integration: IntegrationSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsSection {
    frequency_hz: f64,
    #[serde(default = "default_path_loss")]
    path_loss_exponent: f64,
    #[serde(default = "default_min_distance_wavelengths")]
    min_distance_wavelengths: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentsSection {
    count: usize,
    seed: u64,
    #[serde(default = "default_square_side")]
    square_side_wavelengths: f64,
    #[serde(default)]
    gain_model: GainModelName,
    /// Gain value for the `fixed` model.
    #[serde(default = "default_unit")]
    gain: f64,
    /// Scale for the `rayleigh` model; the default gives mean gain 1.
    #[serde(default = "default_rayleigh_scale")]
    rayleigh_scale: f64,
}

#[derive(Debug, Default, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum GainModelName {
    #[default]
    Fixed,
    Rayleigh,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentRow {
    #[serde(default = "default_unit")]
    amplitude: f64,
    phase: f64,
    #[serde(default = "default_unit")]
    gain: f64,
    position: [f64; 2],
    /// Defaults to `position`.
    #[serde(default)]
    anchor: Option<[f64; 2]>,
    #[serde(default)]
    velocity: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesiredSection {
    #[serde(default)]
    mode: PatternModeName,
    elements: usize,
    #[serde(default = "default_spacing_wavelengths")]
    spacing_wavelengths: f64,
    #[serde(default)]
    taper: TaperName,
    #[serde(default = "default_phase_gradient")]
    phase_gradient: f64,
    #[serde(default = "default_unit")]
    element_gain: f64,
    /// Defaults to the channel's path-loss exponent.
    #[serde(default)]
    path_loss_exponent: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum PatternModeName {
    #[default]
    FarField,
    ChannelAware,
}

#[derive(Debug, Default, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum TaperName {
    #[default]
    Binomial,
    Uniform,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(default)]
    theta_count: Option<usize>,
    #[serde(default)]
    ring_radii_m: Option<Vec<f64>>,
    /// Target magnitudes from a `rho,theta,magnitude` CSV instead of the
    /// `[desired]` generator; the path is relative to the scenario file.
    #[serde(default)]
    targets_csv: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PenaltySection {
    #[serde(default = "default_penalty_strength")]
    strength: f64,
    /// Full symmetric matrix [xx, xy, yy]; overrides `strength`.
    #[serde(default)]
    matrix: Option<[f64; 3]>,
}

impl Default for PenaltySection {
    fn default() -> Self {
        PenaltySection { strength: default_penalty_strength(), matrix: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegrationSection {
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_slow_step")]
    slow_step: f64,
    /// Defaults to epsilon * slow_step / 10 (ten fast updates per slow step).
    #[serde(default)]
    fast_step: Option<f64>,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_stride")]
    snapshot_stride: usize,
    #[serde(default)]
    method: MethodName,
}

impl Default for IntegrationSection {
    fn default() -> Self {
        IntegrationSection {
            epsilon: DEFAULT_EPSILON,
            slow_step: DEFAULT_SLOW_STEP,
            fast_step: None,
            horizon: default_horizon(),
            tolerance: DEFAULT_TOLERANCE,
            snapshot_stride: default_stride(),
            method: MethodName::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum MethodName {
    #[default]
    Euler,
    Rk4,
}

fn default_path_loss() -> f64 {
    2.0
}
fn default_min_distance_wavelengths() -> f64 {
    MIN_DISTANCE_WAVELENGTH_FRACTION
}
fn default_square_side() -> f64 {
    DEFAULT_SQUARE_SIDE_WAVELENGTHS
}
fn default_unit() -> f64 {
    1.0
}
fn default_rayleigh_scale() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}
fn default_spacing_wavelengths() -> f64 {
    0.5
}
fn default_phase_gradient() -> f64 {
    -std::f64::consts::FRAC_PI_2
}
fn default_penalty_strength() -> f64 {
    scenario::REFERENCE_PENALTY
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_slow_step() -> f64 {
    DEFAULT_SLOW_STEP
}
fn default_horizon() -> f64 {
    scenario::REFERENCE_HORIZON
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_stride() -> usize {
    10
}

/// Reads the seed override from the environment, if set.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("{SEED_ENV_VAR}={text}: not a valid u64 seed"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Validation(format!("{SEED_ENV_VAR}: {e}"))),
    }
}

/// Loads and assembles a scenario. Seed precedence: `--seed` flag, then
/// `BEAMFLOW_SEED`, then the `[agents]` section.
pub fn load_scenario(path: &Path, seed_flag: Option<u64>) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: ScenarioFile =
        toml::from_str(&text).map_err(|e| CliError::invalid(path, e.message()))?;
    let seed = match seed_flag {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    assemble(&file, path, seed)
}

fn assemble(file: &ScenarioFile, path: &Path, seed_override: Option<u64>) -> Result<Scenario, CliError> {
    let c = &file.constants;
    if !(c.frequency_hz.is_finite() && c.frequency_hz > 0.0) {
        return Err(CliError::invalid(
            path,
            format!("constants.frequency_hz must be > 0, got {}", c.frequency_hz),
        ));
    }
    let constants = PhysicalConstants::from_frequency(c.frequency_hz, c.path_loss_exponent);
    let wavelength = constants.wavelength;
    let d_min = c.min_distance_wavelengths * wavelength;

    let (agents, rng_seed) = build_agents(file, path, wavelength, seed_override)?;
    let grid = build_grid(file, path, &constants, d_min)?;

    let penalty = match file.penalty.matrix {
        Some([xx, xy, yy]) => Sym2 { xx, xy, yy },
        None => Sym2::scaled_identity(file.penalty.strength),
    };

    let integ = &file.integration;
    let fast_step = integ.fast_step.unwrap_or_else(|| default_fast_step(integ.epsilon, integ.slow_step));
    let scenario = Scenario {
        constants,
        penalties: MotionPenalty::uniform(agents.len(), penalty),
        agents,
        grid,
        epsilon: integ.epsilon,
        fast_step,
        slow_step: integ.slow_step,
        horizon: integ.horizon,
        rng_seed,
        min_distance: d_min,
        integrator: match integ.method {
            MethodName::Euler => Integrator::Euler,
            MethodName::Rk4 => Integrator::Rk4,
        },
        tol_fast: integ.tolerance,
        tol_slow: integ.tolerance,
        snapshot_stride: integ.snapshot_stride,
    };
    // Surface model-level validation now so the caller gets one coherent
    // report; integrate() would reject the same scenarios later anyway.
    validate_scenario(&scenario)?;
    Ok(scenario)
}

fn build_agents(
    file: &ScenarioFile,
    path: &Path,
    wavelength: f64,
    seed_override: Option<u64>,
) -> Result<(Vec<AgentState>, u64), CliError> {
    if !file.agent_rows.is_empty() {
        let agents = file
            .agent_rows
            .iter()
            .map(|row| {
                let position = Vec2::new(row.position[0], row.position[1]);
                let anchor = row.anchor.map_or(position, |a| Vec2::new(a[0], a[1]));
                AgentState {
                    amplitude: row.amplitude,
                    phase: row.phase,
                    gain: row.gain,
                    position,
                    anchor,
                    velocity: Vec2::new(row.velocity[0], row.velocity[1]),
                }
            })
            .collect();
        return Ok((agents, seed_override.unwrap_or(0)));
    }

    let section = file.agents.as_ref().ok_or_else(|| {
        CliError::invalid(path, "provide either an [agents] section or [[agent]] rows")
    })?;
    if section.count == 0 {
        return Err(CliError::invalid(path, "agents.count must be >= 1"));
    }
    let seed = seed_override.unwrap_or(section.seed);
    let gains = match section.gain_model {
        GainModelName::Fixed => GainModel::Fixed(section.gain),
        GainModelName::Rayleigh => GainModel::Rayleigh { scale: section.rayleigh_scale },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = random_agents(
        &mut rng,
        section.count,
        section.square_side_wavelengths * wavelength,
        gains,
    );
    Ok((agents, seed))
}

fn build_grid(
    file: &ScenarioFile,
    path: &Path,
    constants: &PhysicalConstants,
    d_min: f64,
) -> Result<SampleGrid, CliError> {
    if let Some(csv_path) = &file.grid.targets_csv {
        if file.grid.theta_count.is_some() || file.grid.ring_radii_m.is_some() || file.desired.is_some() {
            return Err(CliError::invalid(
                path,
                "grid.targets_csv replaces theta_count, ring_radii_m, and the [desired] section",
            ));
        }
        let resolved = path.parent().unwrap_or(Path::new(".")).join(csv_path);
        let rows = io::read_targets(&resolved)?;
        let points = rows.iter().map(|r| (r.rho, r.theta)).collect();
        let targets = rows.iter().map(|r| r.magnitude).collect();
        return SampleGrid::new(points, targets).map_err(CliError::from);
    }

    let desired = file.desired.as_ref().ok_or_else(|| {
        CliError::invalid(path, "provide a [desired] section or grid.targets_csv")
    })?;
    let theta_count = file.grid.theta_count.ok_or_else(|| {
        CliError::invalid(path, "grid.theta_count is required with a [desired] section")
    })?;
    let rings = file.grid.ring_radii_m.clone().ok_or_else(|| {
        CliError::invalid(path, "grid.ring_radii_m is required with a [desired] section")
    })?;

    if desired.elements == 0 {
        return Err(CliError::invalid(path, "desired.elements must be >= 1"));
    }
    let n = desired.elements;
    let spec = DesiredPatternSpec {
        positions: make_esla(n, desired.spacing_wavelengths * constants.wavelength),
        amplitudes: match desired.taper {
            TaperName::Binomial => binomial_taper(n),
            TaperName::Uniform => vec![1.0; n],
        },
        phase_gradient: desired.phase_gradient,
        gains: vec![desired.element_gain; n],
        path_loss_exponent: desired.path_loss_exponent.unwrap_or(constants.path_loss_exponent),
        mode: match desired.mode {
            PatternModeName::FarField => PatternMode::FarField,
            PatternModeName::ChannelAware => PatternMode::ChannelAware,
        },
    };
    let grid_spec = GridSpec::uniform(theta_count, rings)?;
    desired_pattern(&spec, &grid_spec, constants, d_min).map_err(CliError::from)
}
