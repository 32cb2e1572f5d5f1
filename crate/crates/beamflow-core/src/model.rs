//! Domain types and the scalar objective.
//!
//! A [`Scenario`] bundles everything one experiment needs: carrier constants,
//! the team of agents, the polar sample grid with its target magnitudes, the
//! per-agent motion penalties, and integration parameters. The objective
//! being minimized is
//!
//! ```text
//! J = sum_i phi_i + integral of sum_m (r_m - anchor_m)' S_m (r_m - anchor_m)
//! phi_i = 1/2 (f_i - |AF(rho_i, theta_i)|)^2
//! ```
//!
//! where the pattern term measures the magnitude mismatch at every grid
//! point and the motion term charges agents for straying from their anchors.

use crate::array_factor::{af_magnitude, phasor_basis};
use crate::constants::PhysicalConstants;
use crate::exec;
use crate::geometry::{Sym2, Vec2};

/// One mobile transmitter. `amplitude`, `phase`, `position` and `velocity`
/// evolve under the flows; `gain` and `anchor` are fixed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    /// Excitation amplitude a_m, >= 0 (projected by the fast flow).
    pub amplitude: f64,
    /// Excitation phase alpha_m, radians, stored unwrapped.
    pub phase: f64,
    /// Channel gain gamma_m > 0, sampled once per run, never updated.
    pub gain: f64,
    /// Current position r_m, meters.
    pub position: Vec2,
    /// Home position r_m(t0); the motion penalty is measured against it.
    pub anchor: Vec2,
    /// Auxiliary motion state v_m driven by the anchor displacement; starts
    /// at zero and acts as an integral restoring term.
    pub velocity: Vec2,
}

impl AgentState {
    /// Agent at rest at `position` with unit gain and the given excitation.
    pub fn at_rest(amplitude: f64, phase: f64, position: Vec2) -> Self {
        AgentState {
            amplitude,
            phase,
            gain: 1.0,
            position,
            anchor: position,
            velocity: Vec2::ZERO,
        }
    }
}

/// Polar sample points with their target magnitudes, in a fixed iteration
/// order. All grid reductions follow this order, which is what makes runs
/// bit-reproducible regardless of how the per-point work is scheduled.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrid {
    points: Vec<(f64, f64)>,
    desired: Vec<f64>,
}

impl SampleGrid {
    pub fn new(points: Vec<(f64, f64)>, desired: Vec<f64>) -> Result<Self, ModelError> {
        if points.len() != desired.len() {
            return Err(ModelError::GridLengthMismatch {
                points: points.len(),
                desired: desired.len(),
            });
        }
        Ok(SampleGrid { points, desired })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// (rho, theta) of point `i`.
    #[inline]
    pub fn point(&self, i: usize) -> (f64, f64) {
        self.points[i]
    }

    /// Target magnitude f(rho_i, theta_i).
    #[inline]
    pub fn target(&self, i: usize) -> f64 {
        self.desired[i]
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn targets(&self) -> &[f64] {
        &self.desired
    }

    /// Largest target magnitude; 0 on an empty grid.
    pub fn peak_target(&self) -> f64 {
        self.desired.iter().fold(0.0, |acc, &f| acc.max(f))
    }
}

/// One symmetric positive definite penalty matrix per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionPenalty {
    matrices: Vec<Sym2>,
}

impl MotionPenalty {
    pub fn new(matrices: Vec<Sym2>) -> Self {
        MotionPenalty { matrices }
    }

    /// The same penalty for every agent.
    pub fn uniform(agent_count: usize, s: Sym2) -> Self {
        MotionPenalty { matrices: vec![s; agent_count] }
    }

    #[inline]
    pub fn agent(&self, m: usize) -> Sym2 {
        self.matrices[m]
    }

    pub fn matrices(&self) -> &[Sym2] {
        &self.matrices
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Instantaneous penalty rate sum_m (r_m - anchor_m)' S_m (r_m - anchor_m).
    pub fn displacement_rate(&self, agents: &[AgentState]) -> f64 {
        agents
            .iter()
            .zip(&self.matrices)
            .map(|(a, s)| s.quad_form(a.position - a.anchor))
            .sum()
    }
}

/// Time integration scheme. Euler carries the backtracking descent guard on
/// the fast flow; RK4 trades that certificate for higher order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

/// Complete experiment description.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub constants: PhysicalConstants,
    pub agents: Vec<AgentState>,
    pub grid: SampleGrid,
    pub penalties: MotionPenalty,
    /// Time-scale separation parameter, in (0, 1); the fast flow runs 1/eps
    /// faster than the slow flow.
    pub epsilon: f64,
    /// Fast-flow step h_f; the effective per-step rate is h_f / eps.
    pub fast_step: f64,
    /// Slow-flow step h_s; one slow step runs after round(h_s/h_f) fast steps.
    pub slow_step: f64,
    /// Integration endpoint in simulation time.
    pub horizon: f64,
    pub rng_seed: u64,
    /// Distance clamp floor, meters.
    pub min_distance: f64,
    pub integrator: Integrator,
    /// Stopping tolerance on the summed fast gradient norms.
    pub tol_fast: f64,
    /// Stopping tolerance on the slow gradient norm and on max |v_m|.
    pub tol_slow: f64,
    /// Record a trajectory snapshot every this many slow steps.
    pub snapshot_stride: usize,
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.amplitude).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.phase).collect()
    }
}

/// Components of the cost J at a time instant. The motion term is the
/// trapezoid-accumulated penalty integral up to that time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveValue {
    pub pattern_term: f64,
    pub motion_term: f64,
    pub total: f64,
}

impl ObjectiveValue {
    pub fn new(pattern_term: f64, motion_term: f64) -> Self {
        ObjectiveValue { pattern_term, motion_term, total: pattern_term + motion_term }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("scenario validation failed:\n  - {}", .0.join("\n  - "))]
    InvalidScenario(Vec<String>),
    #[error("pattern specification invalid:\n  - {}", .0.join("\n  - "))]
    InvalidPattern(Vec<String>),
    #[error("grid points and targets differ in length: {points} points, {desired} targets")]
    GridLengthMismatch { points: usize, desired: usize },
}

/// Check every structural invariant at once. Returns the list of warnings
/// (currently only the epsilon magnitude advisory) on success; on failure the
/// error carries one message per violated invariant so nothing is hidden
/// behind the first problem found.
pub fn validate_scenario(s: &Scenario) -> Result<Vec<String>, ModelError> {
    let mut errors = s.constants.invariant_errors();
    let mut warnings = Vec::new();

    if s.agents.is_empty() {
        errors.push("scenario needs at least one agent".into());
    }
    for (m, agent) in s.agents.iter().enumerate() {
        if !(agent.amplitude.is_finite() && agent.amplitude >= 0.0) {
            errors.push(format!("agent {m}: amplitude must be >= 0, got {}", agent.amplitude));
        }
        if !agent.phase.is_finite() {
            errors.push(format!("agent {m}: phase must be finite, got {}", agent.phase));
        }
        if !(agent.gain.is_finite() && agent.gain > 0.0) {
            errors.push(format!("agent {m}: gain must be > 0, got {}", agent.gain));
        }
        if !(agent.position.is_finite() && agent.anchor.is_finite() && agent.velocity.is_finite())
        {
            errors.push(format!("agent {m}: non-finite position, anchor, or velocity"));
        }
    }

    if s.grid.is_empty() {
        errors.push("sample grid is empty".into());
    }
    let mut seen = std::collections::HashSet::new();
    for i in 0..s.grid.len() {
        let (rho, theta) = s.grid.point(i);
        let f = s.grid.target(i);
        if !(rho.is_finite() && rho > 0.0) {
            errors.push(format!("grid point {i}: rho must be > 0, got {rho}"));
        }
        if !theta.is_finite() {
            errors.push(format!("grid point {i}: theta must be finite, got {theta}"));
        }
        if !(f.is_finite() && f >= 0.0) {
            errors.push(format!("grid point {i}: target must be finite and >= 0, got {f}"));
        }
        if !seen.insert((rho.to_bits(), theta.to_bits())) {
            errors.push(format!("grid point {i}: duplicate (rho, theta) = ({rho}, {theta})"));
        }
    }

    if s.penalties.len() != s.agents.len() {
        errors.push(format!(
            "penalty count {} does not match agent count {}",
            s.penalties.len(),
            s.agents.len()
        ));
    }
    for (m, mat) in s.penalties.matrices().iter().enumerate() {
        if !mat.is_finite() || !mat.is_positive_definite() {
            errors.push(format!("agent {m}: penalty not positive definite ({mat:?})"));
        }
    }

    if !(s.epsilon.is_finite() && s.epsilon > 0.0 && s.epsilon < 1.0) {
        errors.push(format!("epsilon must lie in (0, 1), got {}", s.epsilon));
    } else if s.epsilon > 0.1 {
        warnings.push(format!(
            "epsilon = {} is large for a two time-scale split; expected <= 0.1",
            s.epsilon
        ));
    }
    if !(s.fast_step.is_finite() && s.fast_step > 0.0) {
        errors.push(format!("fast_step must be > 0, got {}", s.fast_step));
    }
    if !(s.slow_step.is_finite() && s.slow_step > 0.0) {
        errors.push(format!("slow_step must be > 0, got {}", s.slow_step));
    }
    if s.fast_step > 0.0 && s.slow_step > 0.0 && s.fast_step > s.slow_step {
        errors.push(format!(
            "fast_step {} exceeds slow_step {}; the fast flow must subdivide the slow step",
            s.fast_step, s.slow_step
        ));
    }
    if !(s.horizon.is_finite() && s.horizon >= 0.0) {
        errors.push(format!("horizon must be >= 0, got {}", s.horizon));
    }
    if !(s.min_distance.is_finite() && s.min_distance > 0.0) {
        errors.push(format!("min_distance must be > 0, got {}", s.min_distance));
    }
    if !(s.tol_fast.is_finite() && s.tol_fast > 0.0) {
        errors.push(format!("tol_fast must be > 0, got {}", s.tol_fast));
    }
    if !(s.tol_slow.is_finite() && s.tol_slow > 0.0) {
        errors.push(format!("tol_slow must be > 0, got {}", s.tol_slow));
    }
    if s.snapshot_stride == 0 {
        errors.push("snapshot_stride must be >= 1".into());
    }

    if errors.is_empty() {
        Ok(warnings)
    } else {
        Err(ModelError::InvalidScenario(errors))
    }
}

/// Pattern mismatch at grid point `i`: half the squared residual between the
/// target magnitude and the achieved field magnitude.
pub fn phi_i(
    agents: &[AgentState],
    rho: f64,
    theta: f64,
    target: f64,
    constants: &PhysicalConstants,
    d_min: f64,
) -> f64 {
    let basis = phasor_basis(agents, rho, theta, constants, d_min);
    let amplitudes: Vec<f64> = agents.iter().map(|a| a.amplitude).collect();
    let residual = af_magnitude(&amplitudes, &basis) - target;
    0.5 * residual * residual
}

/// Achieved field magnitude at every grid point, in grid order.
pub fn achieved_magnitudes(
    agents: &[AgentState],
    grid: &SampleGrid,
    constants: &PhysicalConstants,
    d_min: f64,
) -> Vec<f64> {
    let amplitudes: Vec<f64> = agents.iter().map(|a| a.amplitude).collect();
    exec::indexed_map(grid.len(), |i| {
        let (rho, theta) = grid.point(i);
        af_magnitude(&amplitudes, &phasor_basis(agents, rho, theta, constants, d_min))
    })
}

/// Sum of phi_i over the whole grid. Per-point terms may be evaluated
/// concurrently; the sum itself always runs in index order.
pub fn pattern_term(
    agents: &[AgentState],
    grid: &SampleGrid,
    constants: &PhysicalConstants,
    d_min: f64,
) -> f64 {
    let mut terms = vec![0.0; grid.len()];
    exec::fill_chunks(&mut terms, 1, |i, out| {
        let (rho, theta) = grid.point(i);
        out[0] = phi_i(agents, rho, theta, grid.target(i), constants, d_min);
    });
    terms.iter().sum()
}

/// Sequential twin of [`pattern_term`], for benchmarks and for checking that
/// the execution strategy does not change results.
pub fn pattern_term_seq(
    agents: &[AgentState],
    grid: &SampleGrid,
    constants: &PhysicalConstants,
    d_min: f64,
) -> f64 {
    let mut terms = vec![0.0; grid.len()];
    exec::fill_chunks_seq(&mut terms, 1, |i, out| {
        let (rho, theta) = grid.point(i);
        out[0] = phi_i(agents, rho, theta, grid.target(i), constants, d_min);
    });
    terms.iter().sum()
}
