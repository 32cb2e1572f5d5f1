//! Beam pattern synthesis with mobile transmitters, driven by a two
//! time-scale gradient flow.
//!
//! A team of agents, each radiating a tone with adjustable amplitude and
//! phase, should collectively reproduce a desired magnitude pattern over a
//! polar sampling grid. Excitations relax on a fast clock (gradient flow on
//! the summed squared mismatch), while agent positions drift on a slow
//! clock, tethered to their starting anchors by a quadratic motion penalty
//! with an integral restoring term. The split is controlled by a small
//! parameter ε: positions see, at every update, excitations that have
//! already relaxed close to their quasi-steady state.
//!
//! Module map:
//!
//! * [`geometry`] — 2-vectors and symmetric 2×2 matrices.
//! * [`constants`] — carrier frequency, wavelength, wave number, path loss.
//! * [`model`] — agents, sampling grids, scenarios, the scalar objective.
//! * [`array_factor`] — the forward field model and its u/v phasor basis.
//! * [`gradients`] — analytic gradients plus a finite-difference checker.
//! * [`dynamics`] — the two time-scale integrator and its fast engine.
//! * [`pattern`] — target pattern construction (line arrays, tapers, grids).
//! * [`scenario`] — seeded random initialization and the reference scenario.
//! * [`exec`] — deterministic data-parallel helpers (rayon behind the
//!   `parallel` feature; identical results either way).

pub mod array_factor;
pub mod constants;
pub mod dynamics;
pub mod exec;
pub mod geometry;
pub mod gradients;
pub mod model;
pub mod pattern;
pub mod scenario;

pub use constants::{PhysicalConstants, SPEED_OF_LIGHT};
pub use dynamics::{integrate, StopReason, Trajectory};
pub use geometry::{Sym2, Vec2};
pub use gradients::{fd_gradient, grid_gradient, GridGradient};
pub use model::{
    pattern_term, validate_scenario, AgentState, ModelError, MotionPenalty, ObjectiveValue,
    SampleGrid, Scenario,
};
pub use pattern::{binomial_taper, desired_pattern, make_esla, DesiredPatternSpec, GridSpec};
pub use scenario::{random_agents, reference_scenario, GainModel};
