//! Complex optical fields, phase maps and multi-height hologram stacks.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{HoloError, Result};
use crate::grid::OpticalGrid;

/// Default threshold below which a complex mean is treated as zero.
pub const DEFAULT_NORM_EPS: f64 = 1e-8;

fn check_shape<T>(grid: &OpticalGrid, a: &Array2<T>) -> Result<()> {
    let n = grid.n();
    if a.dim() != (n, n) {
        return Err(HoloError::shape((n, n), a.dim()));
    }
    Ok(())
}

fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// N×N complex field sampled on an [`OpticalGrid`], row-major, x = column.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: OpticalGrid,
    values: Array2<Complex64>,
}

impl ComplexField {
    pub fn new(grid: OpticalGrid, values: Array2<Complex64>) -> Result<Self> {
        check_shape(&grid, &values)?;
        if !values.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(HoloError::NonFinite("complex field"));
        }
        Ok(Self { grid, values })
    }

    /// Caller guarantees shape and finiteness (outputs of finite linear maps).
    pub(crate) fn from_parts(grid: OpticalGrid, values: Array2<Complex64>) -> Self {
        debug_assert_eq!(values.dim(), (grid.n(), grid.n()));
        Self { grid, values }
    }

    /// `amplitude · exp(i·phase)` elementwise.
    pub fn from_amp_phase(
        amplitude: &Array2<f64>,
        phase: &Array2<f64>,
        grid: OpticalGrid,
    ) -> Result<Self> {
        check_shape(&grid, amplitude)?;
        check_shape(&grid, phase)?;
        if !all_finite(amplitude) || !all_finite(phase) {
            return Err(HoloError::NonFinite("amplitude/phase"));
        }
        if amplitude.iter().any(|&a| a < 0.0) {
            return Err(HoloError::InvalidArgument("negative amplitude".into()));
        }
        let values = Zip::from(amplitude)
            .and(phase)
            .map_collect(|&a, &p| Complex64::from_polar(a, p));
        Ok(Self { grid, values })
    }

    pub fn constant(grid: OpticalGrid, value: Complex64) -> Self {
        let n = grid.n();
        Self {
            grid,
            values: Array2::from_elem((n, n), value),
        }
    }

    pub fn zeros(grid: OpticalGrid) -> Self {
        Self::constant(grid, Complex64::new(0.0, 0.0))
    }

    pub fn grid(&self) -> &OpticalGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    pub fn amplitude(&self) -> Array2<f64> {
        self.values.mapv(|c| c.norm())
    }

    /// Principal argument in (-π, π].
    pub fn phase(&self) -> Array2<f64> {
        self.values.mapv(|c| c.arg())
    }

    pub fn complex_mean(&self) -> Complex64 {
        let sum: Complex64 = self.values.iter().sum();
        sum / self.values.len() as f64
    }

    /// Divide every sample by the complex mean, so the result has mean 1+0i.
    pub fn normalize_by_complex_mean(&self, eps: f64) -> Result<Self> {
        let mean = self.complex_mean();
        let magnitude = mean.norm();
        if magnitude <= eps {
            return Err(HoloError::DegenerateMean { magnitude, eps });
        }
        Ok(self.map(|c| c / mean))
    }

    /// Σ|f|².
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Multiply every sample by a complex scalar.
    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| v * c)
    }

    pub(crate) fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.mapv(f),
        }
    }
}

/// Real N×N phase map in the units expected by the consumer (for the
/// phase-only forward model the field is `exp(iπ·p)`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    grid: OpticalGrid,
    values: Array2<f64>,
}

impl PhaseMap {
    pub fn new(grid: OpticalGrid, values: Array2<f64>) -> Result<Self> {
        check_shape(&grid, &values)?;
        if !all_finite(&values) {
            return Err(HoloError::NonFinite("phase map"));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_parts(grid: OpticalGrid, values: Array2<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &OpticalGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// `exp(iπ·p)`.
    pub fn to_field(&self) -> ComplexField {
        ComplexField::from_parts(
            self.grid,
            self.values
                .mapv(|p| Complex64::from_polar(1.0, std::f64::consts::PI * p)),
        )
    }

    /// The map with its mean removed.
    pub fn mean_subtracted(&self) -> Self {
        let mean = self.values.mean().unwrap_or(0.0);
        Self {
            grid: self.grid,
            values: self.values.mapv(|p| p - mean),
        }
    }
}

/// One measured amplitude plane at axial distance `z` (µm).
#[derive(Debug, Clone, PartialEq)]
pub struct HologramPlane {
    z: f64,
    amplitude: Array2<f64>,
}

impl HologramPlane {
    pub fn new(z: f64, amplitude: Array2<f64>) -> Result<Self> {
        if !z.is_finite() {
            return Err(HoloError::NonFinite("plane distance"));
        }
        if !all_finite(&amplitude) {
            return Err(HoloError::NonFinite("hologram amplitude"));
        }
        if amplitude.iter().any(|&a| a < 0.0) {
            return Err(HoloError::InvalidArgument(
                "negative hologram amplitude".into(),
            ));
        }
        Ok(Self { z, amplitude })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn amplitude(&self) -> &Array2<f64> {
        &self.amplitude
    }
}

/// M amplitude holograms (|field|, never intensity) sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HologramStack {
    grid: OpticalGrid,
    planes: Vec<HologramPlane>,
}

impl HologramStack {
    pub fn new(grid: OpticalGrid, planes: Vec<HologramPlane>) -> Result<Self> {
        if planes.is_empty() {
            return Err(HoloError::InvalidArgument(
                "hologram stack needs at least one plane".into(),
            ));
        }
        for p in &planes {
            check_shape(&grid, &p.amplitude)?;
        }
        Ok(Self { grid, planes })
    }

    pub(crate) fn from_parts(grid: OpticalGrid, planes: Vec<HologramPlane>) -> Self {
        Self { grid, planes }
    }

    pub fn grid(&self) -> &OpticalGrid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.planes.len()
    }

    pub fn planes(&self) -> &[HologramPlane] {
        &self.planes
    }

    pub fn zs(&self) -> Vec<f64> {
        self.planes.iter().map(|p| p.z).collect()
    }

    /// Planes reordered by ascending z.
    pub fn sorted_by_z(&self) -> Self {
        let mut planes = self.planes.clone();
        planes.sort_by(|a, b| a.z.total_cmp(&b.z));
        Self {
            grid: self.grid,
            planes,
        }
    }

    /// Keep only the first `m` planes.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.m() {
            return Err(HoloError::InvalidArgument(format!(
                "cannot keep {m} of {} planes",
                self.m()
            )));
        }
        Ok(Self {
            grid: self.grid,
            planes: self.planes[..m].to_vec(),
        })
    }

    /// Same amplitudes, relabelled axial distances (e.g. a solver that
    /// assumes nominal distances for data recorded elsewhere).
    pub fn with_zs(&self, zs: &[f64]) -> Result<Self> {
        if zs.len() != self.m() {
            return Err(HoloError::StackMismatch(format!(
                "{} distances for {} planes",
                zs.len(),
                self.m()
            )));
        }
        let planes = self
            .planes
            .iter()
            .zip(zs)
            .map(|(p, &z)| HologramPlane::new(z, p.amplitude.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: self.grid,
            planes,
        })
    }

    /// Multiply every amplitude by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let planes = self
            .planes
            .iter()
            .map(|p| HologramPlane::new(p.z, p.amplitude.mapv(|a| a * c)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: self.grid,
            planes,
        })
    }

    /// Check that another stack is comparable plane-by-plane.
    pub fn check_matches(&self, other: &HologramStack) -> Result<()> {
        if self.grid != other.grid {
            return Err(HoloError::StackMismatch("grids differ".into()));
        }
        if self.m() != other.m() {
            return Err(HoloError::StackMismatch(format!(
                "{} vs {} planes",
                self.m(),
                other.m()
            )));
        }
        for (a, b) in self.planes.iter().zip(&other.planes) {
            if a.z != b.z {
                return Err(HoloError::StackMismatch(format!("z {} vs {}", a.z, b.z)));
            }
        }
        Ok(())
    }
}
