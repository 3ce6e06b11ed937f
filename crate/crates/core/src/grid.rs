//! Sampling grid and illumination parameters.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{HoloError, Result};

/// Effective pixel pitch of the super-resolved holograms, in micrometers.
pub const DEFAULT_PITCH_UM: f64 = 0.37;
/// Illumination wavelength in vacuum, in micrometers.
pub const DEFAULT_WAVELENGTH_UM: f64 = 0.530;

/// Square sampling grid plus the optical constants needed to build a
/// transfer function. All lengths are micrometers.
///
/// The wavenumber is always derived from the wavelength and the medium index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct OpticalGrid {
    n: usize,
    pitch: f64,
    wavelength: f64,
    refractive_index: f64,
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    n: usize,
    pitch_um: f64,
    wavelength_um: f64,
    #[serde(default = "default_index")]
    refractive_index: f64,
}

fn default_index() -> f64 {
    1.0
}

impl TryFrom<GridSpec> for OpticalGrid {
    type Error = HoloError;

    fn try_from(s: GridSpec) -> Result<Self> {
        OpticalGrid::new(s.n, s.pitch_um, s.wavelength_um, s.refractive_index)
    }
}

impl From<OpticalGrid> for GridSpec {
    fn from(g: OpticalGrid) -> Self {
        GridSpec {
            n: g.n,
            pitch_um: g.pitch,
            wavelength_um: g.wavelength,
            refractive_index: g.refractive_index,
        }
    }
}

impl OpticalGrid {
    pub fn new(n: usize, pitch: f64, wavelength: f64, refractive_index: f64) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(HoloError::InvalidGrid(format!(
                "n must be even and >= 8, got {n}"
            )));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(HoloError::InvalidGrid(format!(
                "pitch must be positive, got {pitch}"
            )));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(HoloError::InvalidGrid(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !(refractive_index.is_finite() && refractive_index >= 1.0) {
            return Err(HoloError::InvalidGrid(format!(
                "refractive index must be >= 1, got {refractive_index}"
            )));
        }
        Ok(Self {
            n,
            pitch,
            wavelength,
            refractive_index,
        })
    }

    /// Grid of side `n` with the default pitch, wavelength and vacuum index.
    pub fn with_defaults(n: usize) -> Result<Self> {
        Self::new(n, DEFAULT_PITCH_UM, DEFAULT_WAVELENGTH_UM, 1.0)
    }

    /// Same sampling, different illumination wavelength.
    pub fn with_wavelength(&self, wavelength: f64) -> Result<Self> {
        Self::new(self.n, self.pitch, wavelength, self.refractive_index)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn refractive_index(&self) -> f64 {
        self.refractive_index
    }

    /// Wavenumber in the medium, radians per micrometer.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.refractive_index / self.wavelength
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Signed FFT frequency index for array index `idx` (0, 1, .., n/2-1, -n/2, .., -1).
    pub fn signed_index(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let i = idx as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Angular spatial frequency for array index `idx`, radians per micrometer.
    pub fn angular_frequency(&self, idx: usize) -> f64 {
        2.0 * PI * self.signed_index(idx) as f64 / (self.n as f64 * self.pitch)
    }

    /// Bit pattern of the parameters, usable as a hash key.
    pub(crate) fn key(&self) -> (usize, u64, u64, u64) {
        (
            self.n,
            self.pitch.to_bits(),
            self.wavelength.to_bits(),
            self.refractive_index.to_bits(),
        )
    }
}
