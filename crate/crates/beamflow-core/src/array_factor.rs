//! Array-factor evaluation for a team of mobile transmitters observed at
//! polar sample points `(rho, theta)`.
//!
//! Each transmitter `m` at position `r_m` contributes a phasor whose
//! amplitude decays with the transmitter-to-observation distance `d_m` as
//! `gamma_m * d_m^(-mu/2)` and whose phase advances by
//! `zeta_m = k x_m cos(theta) + k y_m sin(theta) + k d_m`. Splitting each
//! contribution into in-phase and quadrature parts,
//!
//! ```text
//! u[m] = gamma_m d_m^(-mu/2) cos(alpha_m + zeta_m)
//! v[m] = gamma_m d_m^(-mu/2) sin(alpha_m + zeta_m)
//! ```
//!
//! lets the composite field be read off as `a'u + j a'v` for the amplitude
//! vector `a`, which keeps the magnitude and all of its gradients in purely
//! real arithmetic. A far-field variant drops the distance-dependent
//! amplitude and the `k d_m` phase term; it describes the idealized pattern
//! of a fixed array and backs the desired-pattern generator.

use crate::constants::PhysicalConstants;
use crate::geometry::Vec2;
use crate::model::AgentState;

/// Euclidean distance between a transmitter at `position` and the
/// observation point `rho * (cos theta, sin theta)`, clamped from below by
/// `d_min` so the inverse-distance amplitude stays finite.
#[inline]
pub fn distance(position: Vec2, rho: f64, theta: f64, d_min: f64) -> f64 {
    let obs = Vec2::new(rho * theta.cos(), rho * theta.sin());
    (position - obs).norm().max(d_min)
}

/// Per-transmitter spatial phase offset at an observation point:
/// projection advance `k (x cos theta + y sin theta)` plus propagation
/// advance `k d` over the (clamped) distance.
#[inline]
pub fn zeta(position: Vec2, rho: f64, theta: f64, wave_number: f64, d_min: f64) -> f64 {
    let d = distance(position, rho, theta, d_min);
    wave_number * (position.x * theta.cos() + position.y * theta.sin() + d)
}

/// `d^(-mu/2)` with the two ubiquitous exponents special-cased. `mu = 2`
/// (free space) is the default everywhere, so avoiding `powf` there buys a
/// measurable amount in the hot loops.
#[inline]
pub fn amplitude_decay(d: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        1.0
    } else if mu == 2.0 {
        1.0 / d
    } else {
        d.powf(-0.5 * mu)
    }
}

/// Phasor decomposition of every transmitter's contribution at one
/// observation point. Satisfies `u[m]^2 + v[m]^2 = (gamma_m d[m]^(-mu/2))^2`
/// (channel-aware) or `= gamma-free 1` (far-field) up to rounding.
#[derive(Clone, Debug)]
pub struct PhasorBasis {
    /// In-phase components, one per transmitter.
    pub u: Vec<f64>,
    /// Quadrature components, one per transmitter.
    pub v: Vec<f64>,
    /// Clamped distances to the observation point.
    pub d: Vec<f64>,
    /// Spatial phase offsets used for `u` and `v`.
    pub zeta: Vec<f64>,
}

/// Channel-aware basis: amplitude decay and propagation phase included.
pub fn phasor_basis(
    agents: &[AgentState],
    rho: f64,
    theta: f64,
    constants: &PhysicalConstants,
    d_min: f64,
) -> PhasorBasis {
    let (sin_t, cos_t) = theta.sin_cos();
    let k = constants.wave_number;
    let mu = constants.path_loss_exponent;
    let obs = Vec2::new(rho * cos_t, rho * sin_t);

    let n = agents.len();
    let mut basis = PhasorBasis {
        u: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        zeta: Vec::with_capacity(n),
    };
    for agent in agents {
        let d = (agent.position - obs).norm().max(d_min);
        let z = k * (agent.position.x * cos_t + agent.position.y * sin_t + d);
        let (s, c) = (agent.phase + z).sin_cos();
        let g = agent.gain * amplitude_decay(d, mu);
        basis.u.push(g * c);
        basis.v.push(g * s);
        basis.d.push(d);
        basis.zeta.push(z);
    }
    basis
}

/// Far-field basis: unit amplitudes, projection phase only. The recorded
/// distances are still the clamped geometric ones, for inspection; they do
/// not enter `u` or `v`.
pub fn phasor_basis_far_field(
    agents: &[AgentState],
    rho: f64,
    theta: f64,
    constants: &PhysicalConstants,
    d_min: f64,
) -> PhasorBasis {
    let (sin_t, cos_t) = theta.sin_cos();
    let k = constants.wave_number;
    let obs = Vec2::new(rho * cos_t, rho * sin_t);

    let n = agents.len();
    let mut basis = PhasorBasis {
        u: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        zeta: Vec::with_capacity(n),
    };
    for agent in agents {
        let d = (agent.position - obs).norm().max(d_min);
        let z = k * (agent.position.x * cos_t + agent.position.y * sin_t);
        let (s, c) = (agent.phase + z).sin_cos();
        basis.u.push(agent.gain * c);
        basis.v.push(agent.gain * s);
        basis.d.push(d);
        basis.zeta.push(z);
    }
    basis
}

/// Composite field as a complex number `(a'u, a'v)`.
#[inline]
pub fn af_complex(amplitudes: &[f64], basis: &PhasorBasis) -> (f64, f64) {
    debug_assert_eq!(amplitudes.len(), basis.u.len());
    let mut re = 0.0;
    let mut im = 0.0;
    for m in 0..amplitudes.len() {
        re += amplitudes[m] * basis.u[m];
        im += amplitudes[m] * basis.v[m];
    }
    (re, im)
}

/// Composite field magnitude `sqrt((a'u)^2 + (a'v)^2)`.
#[inline]
pub fn af_magnitude(amplitudes: &[f64], basis: &PhasorBasis) -> f64 {
    let (re, im) = af_complex(amplitudes, basis);
    (re * re + im * im).sqrt()
}
