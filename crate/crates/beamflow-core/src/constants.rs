//! Carrier constants shared by every evaluation: frequency, wavelength,
//! wave number, and the path-loss exponent of the propagation model.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Derived carrier quantities. Construct through [`PhysicalConstants::from_frequency`]
/// so that `wavelength = c / frequency` and `wave_number = 2 pi / wavelength`
/// hold by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    /// Carrier frequency, Hz.
    pub frequency: f64,
    /// Carrier wavelength, m.
    pub wavelength: f64,
    /// k = 2 pi / wavelength, rad/m.
    pub wave_number: f64,
    /// Path-loss exponent mu; amplitudes decay as d^(-mu/2). 2 is free space.
    pub path_loss_exponent: f64,
}

impl PhysicalConstants {
    pub fn from_frequency(frequency: f64, path_loss_exponent: f64) -> Self {
        let wavelength = SPEED_OF_LIGHT / frequency;
        PhysicalConstants {
            frequency,
            wavelength,
            wave_number: 2.0 * std::f64::consts::PI / wavelength,
            path_loss_exponent,
        }
    }

    /// Internal-consistency and sanity checks; returns one message per
    /// violation so callers can report them all at once.
    pub fn invariant_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            errs.push(format!("frequency must be positive and finite, got {}", self.frequency));
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent >= 0.0) {
            errs.push(format!(
                "path loss exponent must be non-negative, got {}",
                self.path_loss_exponent
            ));
        }
        if self.frequency > 0.0 {
            let expect_wl = SPEED_OF_LIGHT / self.frequency;
            if ((self.wavelength - expect_wl) / expect_wl).abs() > 1e-9 {
                errs.push(format!(
                    "wavelength {} inconsistent with frequency {} (expected {})",
                    self.wavelength, self.frequency, expect_wl
                ));
            }
        }
        if self.wavelength > 0.0 {
            let expect_k = 2.0 * std::f64::consts::PI / self.wavelength;
            if ((self.wave_number - expect_k) / expect_k).abs() > 1e-12 {
                errs.push(format!(
                    "wave number {} inconsistent with wavelength {} (expected {})",
                    self.wave_number, self.wavelength, expect_k
                ));
            }
        }
        errs
    }
}
