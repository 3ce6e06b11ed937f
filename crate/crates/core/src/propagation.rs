//! Angular-spectrum free-space propagation and the hologram forward model.
//!
//! A field is propagated by `IFFT2(FFT2(f) ⊙ H_z)` where
//! `H_z(ξ, η) = exp(i·z·√(k² − ξ² − η²))` on the propagating band and zero on
//! the evanescent band. With unitary transforms the adjoint is the same
//! operation with the conjugate transfer function.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use once_cell::sync::Lazy;
use parking_lot::RwLock;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{HoloError, Result};
use crate::fft;
use crate::field::{ComplexField, HologramPlane, HologramStack};
use crate::grid::OpticalGrid;

/// Transfer function sampled over FFT-ordered angular frequencies.
#[derive(Debug, Clone)]
pub struct TransferFunction {
    grid: OpticalGrid,
    z: f64,
    values: Arc<Array2<Complex64>>,
}

impl TransferFunction {
    pub fn grid(&self) -> &OpticalGrid {
        &self.grid
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    /// True where ξ² + η² < k².
    pub fn passband(grid: &OpticalGrid) -> Array2<bool> {
        let n = grid.n();
        let k2 = grid.wavenumber().powi(2);
        Array2::from_shape_fn((n, n), |(r, c)| {
            let eta = grid.angular_frequency(r);
            let xi = grid.angular_frequency(c);
            xi * xi + eta * eta < k2
        })
    }
}

type CacheKey = ((usize, u64, u64, u64), u64);

const CACHE_LIMIT: usize = 512;

static CACHE: Lazy<RwLock<HashMap<CacheKey, Arc<Array2<Complex64>>>>> = Lazy::new(Default::default);

fn build_transfer(grid: &OpticalGrid, z: f64) -> Array2<Complex64> {
    let n = grid.n();
    let k2 = grid.wavenumber().powi(2);
    let dist = z.abs();
    Array2::from_shape_fn((n, n), |(r, c)| {
        let eta = grid.angular_frequency(r);
        let xi = grid.angular_frequency(c);
        let s = k2 - xi * xi - eta * eta;
        if xi * xi + eta * eta < k2 {
            let phase = dist * s.sqrt();
            let h = Complex64::new(phase.cos(), phase.sin());
            // built from |z| so that H(-z) is bitwise conj(H(z))
            if z < 0.0 {
                h.conj()
            } else {
                h
            }
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

pub fn transfer_function(grid: &OpticalGrid, z: f64) -> TransferFunction {
    let key = (grid.key(), z.to_bits());
    if let Some(v) = CACHE.read().get(&key) {
        return TransferFunction {
            grid: *grid,
            z,
            values: v.clone(),
        };
    }
    let values = Arc::new(build_transfer(grid, z));
    let mut cache = CACHE.write();
    if cache.len() >= CACHE_LIMIT {
        cache.clear();
    }
    cache.insert(key, values.clone());
    TransferFunction {
        grid: *grid,
        z,
        values,
    }
}

fn apply_transfer(f: &ComplexField, z: f64, conjugate: bool) -> ComplexField {
    let grid = *f.grid();
    let plan = fft::plan(grid.n());
    let h = transfer_function(&grid, z);
    let mut spec = f.values().as_standard_layout().into_owned();
    plan.forward(&mut spec);
    if conjugate {
        Zip::from(&mut spec)
            .and(h.values())
            .for_each(|s, &t| *s *= t.conj());
    } else {
        Zip::from(&mut spec)
            .and(h.values())
            .for_each(|s, &t| *s *= t);
    }
    plan.inverse(&mut spec);
    ComplexField::from_parts(grid, spec)
}

/// Free-space propagation by signed distance `z` (µm).
pub fn propagate(f: &ComplexField, z: f64) -> ComplexField {
    apply_transfer(f, z, false)
}

/// Exact adjoint of [`propagate`] under `⟨a, b⟩ = Σ conj(a)·b`.
pub fn adjoint_propagate(f: &ComplexField, z: f64) -> ComplexField {
    apply_transfer(f, z, true)
}

/// Remove the evanescent spectral components, leaving a field on which
/// propagation is exactly invertible.
pub fn band_limit(f: &ComplexField) -> ComplexField {
    let grid = *f.grid();
    let plan = fft::plan(grid.n());
    let pass = TransferFunction::passband(&grid);
    let mut spec = f.values().as_standard_layout().into_owned();
    plan.forward(&mut spec);
    Zip::from(&mut spec).and(&pass).for_each(|s, &p| {
        if !p {
            *s = Complex64::new(0.0, 0.0);
        }
    });
    plan.inverse(&mut spec);
    ComplexField::from_parts(grid, spec)
}

/// Noiseless amplitude holograms `|propagate(f, z)|` at each distance.
pub fn forward_stack(f: &ComplexField, zs: &[f64]) -> Result<HologramStack> {
    simulate_hologram_stack(f, zs, 0.0, 0)
}

/// Per-component noise standard deviation giving `snr_db` relative to the
/// mean hologram amplitude: `snr_db = 20·log10(mean / σ)`.
pub fn sigma_for_snr_db(mean_amplitude: f64, snr_db: f64) -> f64 {
    mean_amplitude / 10f64.powf(snr_db / 20.0)
}

/// `|propagate(object, z) + ε|` for each z, with ε circular complex Gaussian
/// of per-component standard deviation `noise_sigma`, deterministic in `seed`.
pub fn simulate_hologram_stack(
    object: &ComplexField,
    zs: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<HologramStack> {
    if zs.is_empty() {
        return Err(HoloError::InvalidArgument(
            "no propagation distances".into(),
        ));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(HoloError::InvalidArgument(format!(
            "noise sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planes = Vec::with_capacity(zs.len());
    for &z in zs {
        if !z.is_finite() {
            return Err(HoloError::NonFinite("propagation distance"));
        }
        let u = propagate(object, z);
        let amplitude = if noise_sigma > 0.0 {
            u.values().mapv(|v| {
                let er: f64 = StandardNormal.sample(&mut rng);
                let ei: f64 = StandardNormal.sample(&mut rng);
                (v + Complex64::new(er * noise_sigma, ei * noise_sigma)).norm()
            })
        } else {
            u.values().mapv(|v| v.norm())
        };
        planes.push(HologramPlane::new(z, amplitude)?);
    }
    Ok(HologramStack::from_parts(*object.grid(), planes))
}
