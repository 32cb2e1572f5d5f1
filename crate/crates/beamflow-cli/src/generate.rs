//! `generate-pattern`: evaluate a fictitious line-array target over a polar
//! grid and write it as a `rho,theta,magnitude` CSV.

use std::path::PathBuf;

use clap::{Args, ValueEnum};

use beamflow_core::pattern::{DesiredPatternSpec, GridSpec, PatternMode};
use beamflow_core::scenario::MIN_DISTANCE_WAVELENGTH_FRACTION;
use beamflow_core::{binomial_taper, desired_pattern, make_esla, PhysicalConstants};

use crate::error::CliError;
use crate::io;

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Number of fictitious line-array elements.
    #[arg(long, value_name = "N")]
    pub esla: usize,

    /// Element spacing: meters, or the literal "half-wavelength".
    #[arg(long, default_value = "half-wavelength")]
    pub spacing: String,

    /// Amplitude taper across the elements.
    #[arg(long, value_enum, default_value_t = Taper::Binomial)]
    pub taper: Taper,

    /// Linear phase gradient across elements, radians.
    #[arg(long, default_value_t = -std::f64::consts::FRAC_PI_2, allow_hyphen_values = true)]
    pub phase_gradient: f64,

    /// Carrier frequency, Hz.
    #[arg(long, value_name = "HZ")]
    pub freq: f64,

    /// How the fictitious field is evaluated.
    #[arg(long, value_enum, default_value_t = Mode::FarField)]
    pub mode: Mode,

    /// Path-loss exponent (channel-aware mode).
    #[arg(long, default_value_t = 2.0)]
    pub path_loss: f64,

    /// Gain of every fictitious element.
    #[arg(long, default_value_t = 1.0)]
    pub element_gain: f64,

    /// Number of uniform azimuth samples in [0, 2pi).
    #[arg(long, default_value_t = 720)]
    pub theta_count: usize,

    /// Sampling ring radii, meters (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "10.0")]
    pub rings: Vec<f64>,

    /// Output CSV path.
    #[arg(long, default_value = "pattern.csv")]
    pub out: PathBuf,

    /// Overwrite the output file if it exists.
    #[arg(long)]
    pub force: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Taper {
    Binomial,
    Uniform,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    FarField,
    ChannelAware,
}

pub fn run(args: &GenerateArgs) -> Result<(), CliError> {
    if args.esla == 0 {
        return Err(CliError::Validation("--esla must be >= 1".into()));
    }
    if !(args.freq.is_finite() && args.freq > 0.0) {
        return Err(CliError::Validation(format!("--freq must be > 0, got {}", args.freq)));
    }
    let constants = PhysicalConstants::from_frequency(args.freq, args.path_loss);
    let spacing = parse_spacing(&args.spacing, constants.wavelength)?;
    let d_min = MIN_DISTANCE_WAVELENGTH_FRACTION * constants.wavelength;

    let n = args.esla;
    let spec = DesiredPatternSpec {
        positions: make_esla(n, spacing),
        amplitudes: match args.taper {
            Taper::Binomial => binomial_taper(n),
            Taper::Uniform => vec![1.0; n],
        },
        phase_gradient: args.phase_gradient,
        gains: vec![args.element_gain; n],
        path_loss_exponent: args.path_loss,
        mode: match args.mode {
            Mode::FarField => PatternMode::FarField,
            Mode::ChannelAware => PatternMode::ChannelAware,
        },
    };
    let grid_spec = GridSpec::uniform(args.theta_count, args.rings.clone())?;
    let grid = desired_pattern(&spec, &grid_spec, &constants, d_min)?;

    io::guard_overwrite(&args.out, args.force)?;
    io::write_targets(&args.out, &grid)?;
    println!("wrote {} target rows to {}", grid.len(), args.out.display());
    Ok(())
}

fn parse_spacing(text: &str, wavelength: f64) -> Result<f64, CliError> {
    if text == "half-wavelength" {
        return Ok(wavelength / 2.0);
    }
    let meters: f64 = text
        .parse()
        .map_err(|_| CliError::Validation(format!("--spacing {text:?}: expected meters or \"half-wavelength\"")))?;
    if !(meters.is_finite() && meters > 0.0) {
        return Err(CliError::Validation(format!("--spacing must be > 0, got {meters}")));
    }
    Ok(meters)
}
