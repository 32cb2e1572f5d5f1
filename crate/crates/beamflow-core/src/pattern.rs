//! Target pattern construction.
//!
//! Desired magnitudes come from a fictitious nominal array: a handful of
//! virtual elements with chosen positions, an amplitude taper, and a linear
//! phase gradient. Two evaluation modes exist:
//!
//! * **far field** — only the plane-wave projection phase k(x cos θ + y sin θ)
//!   enters; element distances drop out entirely, so the pattern depends on
//!   θ alone. This is the classical array-factor textbook form.
//! * **channel aware** — each virtual element radiates through the same
//!   path-loss channel as a real agent: amplitude scaled by γ d^(-μ/2) and
//!   the full distance phase k·d included.
//!
//! The classic five-element, half-wavelength, binomially tapered line array
//! with a −π/2 phase gradient is the stock reference target: its far-field
//! pattern has a single coherent peak of height 16 at θ = 60° (and the
//! mirror 300°).

use crate::array_factor::{af_magnitude, phasor_basis};
use crate::constants::PhysicalConstants;
use crate::exec;
use crate::geometry::Vec2;
use crate::model::{AgentState, ModelError, SampleGrid};

/// Equally spaced line of `n` points on the x-axis, centered on the origin:
/// element m sits at ((m - (n-1)/2) · spacing, 0).
pub fn make_esla(n: usize, spacing: f64) -> Vec<Vec2> {
    assert!(n >= 1, "a line array needs at least one element");
    assert!(spacing > 0.0, "element spacing must be positive, got {spacing}");
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|m| Vec2::new((m as f64 - mid) * spacing, 0.0)).collect()
}

/// Binomial amplitude taper: element m gets C(n-1, m). Unnormalized, so the
/// coherent sum is 2^(n-1).
pub fn binomial_taper(n: usize) -> Vec<f64> {
    assert!(n >= 1, "taper needs at least one element");
    let mut row = vec![1.0];
    for _ in 1..n {
        let mut next = vec![1.0];
        for w in row.windows(2) {
            next.push(w[0] + w[1]);
        }
        next.push(1.0);
        row = next;
    }
    row
}

/// How the fictitious array's field is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PatternMode {
    /// Plane-wave projection phase only; distances drop out.
    #[default]
    FarField,
    /// Full path-loss amplitude and distance phase, like a real agent.
    ChannelAware,
}

/// A fictitious nominal array defining the target magnitude field.
#[derive(Clone, Debug, PartialEq)]
pub struct DesiredPatternSpec {
    pub positions: Vec<Vec2>,
    pub amplitudes: Vec<f64>,
    /// Per-element phase increment: element m is driven at phase m times
    /// this value.
    pub phase_gradient: f64,
    pub gains: Vec<f64>,
    pub path_loss_exponent: f64,
    pub mode: PatternMode,
}

impl DesiredPatternSpec {
    /// Classic reference target: n-element half-wavelength line array with
    /// binomial taper, phase gradient −π/2, unit gains, far-field mode.
    pub fn esla_reference(n: usize, wavelength: f64) -> Self {
        DesiredPatternSpec {
            positions: make_esla(n, wavelength / 2.0),
            amplitudes: binomial_taper(n),
            phase_gradient: -std::f64::consts::FRAC_PI_2,
            gains: vec![1.0; n],
            path_loss_exponent: 2.0,
            mode: PatternMode::FarField,
        }
    }

    pub fn element_count(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut errors = Vec::new();
        let n = self.positions.len();
        if n == 0 {
            errors.push("pattern needs at least one fictitious element".into());
        }
        if self.amplitudes.len() != n || self.gains.len() != n {
            errors.push(format!(
                "element counts disagree: {} positions, {} amplitudes, {} gains",
                n,
                self.amplitudes.len(),
                self.gains.len()
            ));
        }
        for (m, a) in self.amplitudes.iter().enumerate() {
            if !(a.is_finite() && *a >= 0.0) {
                errors.push(format!("element {m}: amplitude must be >= 0, got {a}"));
            }
        }
        for (m, g) in self.gains.iter().enumerate() {
            if !(g.is_finite() && *g > 0.0) {
                errors.push(format!("element {m}: gain must be > 0, got {g}"));
            }
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent >= 0.0) {
            errors.push(format!(
                "path-loss exponent must be >= 0, got {}",
                self.path_loss_exponent
            ));
        }
        if !self.phase_gradient.is_finite() {
            errors.push(format!("phase gradient must be finite, got {}", self.phase_gradient));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidPattern(errors))
        }
    }

    /// Target magnitude at one polar sample point.
    pub fn magnitude(
        &self,
        rho: f64,
        theta: f64,
        constants: &PhysicalConstants,
        d_min: f64,
    ) -> f64 {
        match self.mode {
            PatternMode::FarField => {
                let k = constants.wave_number;
                let (sin_t, cos_t) = theta.sin_cos();
                let mut re = 0.0;
                let mut im = 0.0;
                for (m, pos) in self.positions.iter().enumerate() {
                    let phase = m as f64 * self.phase_gradient
                        + k * (pos.x * cos_t + pos.y * sin_t);
                    let (s, c) = phase.sin_cos();
                    re += self.amplitudes[m] * c;
                    im += self.amplitudes[m] * s;
                }
                (re * re + im * im).sqrt()
            }
            PatternMode::ChannelAware => {
                let elements = self.as_agents();
                let channel = PhysicalConstants {
                    path_loss_exponent: self.path_loss_exponent,
                    ..*constants
                };
                let amps: Vec<f64> = self.amplitudes.clone();
                af_magnitude(&amps, &phasor_basis(&elements, rho, theta, &channel, d_min))
            }
        }
    }

    /// The fictitious elements viewed as (static) agents, for channel-aware
    /// evaluation through the ordinary forward model.
    fn as_agents(&self) -> Vec<AgentState> {
        self.positions
            .iter()
            .enumerate()
            .map(|(m, &pos)| AgentState {
                amplitude: self.amplitudes[m],
                phase: m as f64 * self.phase_gradient,
                gain: self.gains[m],
                position: pos,
                anchor: pos,
                velocity: Vec2::ZERO,
            })
            .collect()
    }
}

/// Product sampling grid: every ρ in `rho_list` paired with every θ in
/// `theta_list`. Iteration (and therefore CSV and reduction) order is
/// ρ-major: all θ for the first ρ, then all θ for the second, and so on.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub theta_list: Vec<f64>,
    pub rho_list: Vec<f64>,
}

impl GridSpec {
    pub fn new(theta_list: Vec<f64>, rho_list: Vec<f64>) -> Result<Self, ModelError> {
        let mut errors = Vec::new();
        if theta_list.is_empty() {
            errors.push("theta list is empty".into());
        }
        if rho_list.is_empty() {
            errors.push("rho list is empty".into());
        }
        let tau = 2.0 * std::f64::consts::PI;
        for (j, &t) in theta_list.iter().enumerate() {
            if !(t.is_finite() && (0.0..tau).contains(&t)) {
                errors.push(format!("theta[{j}] = {t} lies outside [0, 2pi)"));
            }
            if j > 0 && t <= theta_list[j - 1] {
                errors.push(format!("theta list not strictly increasing at index {j}"));
            }
        }
        for (j, &r) in rho_list.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                errors.push(format!("rho[{j}] = {r} must be > 0"));
            }
            if j > 0 && r <= rho_list[j - 1] {
                errors.push(format!("rho list not strictly increasing at index {j}"));
            }
        }
        if errors.is_empty() {
            Ok(GridSpec { theta_list, rho_list })
        } else {
            Err(ModelError::InvalidPattern(errors))
        }
    }

    /// Uniform θ circle with `theta_count` samples (2π j / count) over the
    /// given radii.
    pub fn uniform(theta_count: usize, rho_values: Vec<f64>) -> Result<Self, ModelError> {
        if theta_count == 0 {
            return Err(ModelError::InvalidPattern(vec!["theta count must be >= 1".into()]));
        }
        let tau = 2.0 * std::f64::consts::PI;
        let thetas = (0..theta_count).map(|j| tau * j as f64 / theta_count as f64).collect();
        GridSpec::new(thetas, rho_values)
    }

    pub fn len(&self) -> usize {
        self.theta_list.len() * self.rho_list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (ρ, θ) pairs in ρ-major order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(self.len());
        for &rho in &self.rho_list {
            for &theta in &self.theta_list {
                pts.push((rho, theta));
            }
        }
        pts
    }
}

/// Evaluates the desired magnitudes over a grid and bundles them into a
/// [`SampleGrid`] ready to drop into a scenario.
pub fn desired_pattern(
    spec: &DesiredPatternSpec,
    grid: &GridSpec,
    constants: &PhysicalConstants,
    d_min: f64,
) -> Result<SampleGrid, ModelError> {
    spec.validate()?;
    let points = grid.points();
    let targets = exec::indexed_map(points.len(), |i| {
        let (rho, theta) = points[i];
        spec.magnitude(rho, theta, constants, d_min)
    });
    SampleGrid::new(points, targets)
}
