//! Reconstruction quality: global SSIM, RMSE and the enhanced correlation
//! coefficient (ECC).

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{HoloError, Result};
use crate::field::ComplexField;

/// SSIM stabilisers for 8-bit data.
pub const SSIM_C1: f64 = 2.55 * 2.55;
pub const SSIM_C2: f64 = 7.65 * 7.65;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ssim_amp: f64,
    pub ssim_phase: f64,
    pub rmse_amp: f64,
    pub rmse_phase: f64,
    pub ecc: f64,
}

fn same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(HoloError::shape(a.dim(), b.dim()));
    }
    Ok(())
}

/// Single-window SSIM from global means, variances and covariance.
/// Inputs are expected on an 8-bit [0, 255] scale.
pub fn ssim_global(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cov += (x - ma) * (y - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    Ok(((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2)))
}

pub fn rmse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

fn mean_subtracted(f: &ComplexField) -> Array2<Complex64> {
    let mean = f.complex_mean();
    f.values().mapv(|v| v - mean)
}

/// Normalised complex inner product `⟨recon', truth'⟩ / (‖recon'‖·‖truth'‖)`
/// of the mean-subtracted fields.
pub fn complex_correlation(recon: &ComplexField, truth: &ComplexField) -> Result<Complex64> {
    if recon.values().dim() != truth.values().dim() {
        return Err(HoloError::shape(truth.values().dim(), recon.values().dim()));
    }
    let r = mean_subtracted(recon);
    let t = mean_subtracted(truth);
    let nr = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let nt = t.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if nr <= 1e-12 || nt <= 1e-12 {
        return Err(HoloError::DegenerateField(
            "zero norm after mean subtraction",
        ));
    }
    let ip: Complex64 = r.iter().zip(t.iter()).map(|(a, b)| a.conj() * b).sum();
    Ok(ip / (nr * nt))
}

/// Real part of the normalised complex correlation. Not invariant to a
/// global phase on either argument.
pub fn ecc(recon: &ComplexField, truth: &ComplexField) -> Result<f64> {
    complex_correlation(recon, truth).map(|c| c.re)
}

/// `recon` rotated by the global phase that best aligns it with `truth`
/// (argument of the raw inner product `⟨recon, truth⟩`).
pub fn align_global_phase(recon: &ComplexField, truth: &ComplexField) -> ComplexField {
    let ip: Complex64 = recon
        .values()
        .iter()
        .zip(truth.values())
        .map(|(a, b)| a.conj() * b)
        .sum();
    if ip.norm() == 0.0 {
        return recon.clone();
    }
    recon.scale(Complex64::from_polar(1.0, ip.arg()))
}

/// Map both images with the affine transform taking the truth's [min, max]
/// onto [0, 255].
fn to_8bit_range(recon: &Array2<f64>, truth: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let lo = truth.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scale = if span > 0.0 { 255.0 / span } else { 1.0 };
    (
        recon.mapv(|v| (v - lo) * scale),
        truth.mapv(|v| (v - lo) * scale),
    )
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Amplitude/phase SSIM and RMSE plus ECC.
///
/// Phase metrics use the reconstruction after global-phase alignment, with
/// each phase sample unwrapped onto the truth's branch. ECC is the modulus of
/// the complex correlation, i.e. its real part after optimal phase alignment.
pub fn evaluate(recon: &ComplexField, truth: &ComplexField) -> Result<MetricsReport> {
    let corr = complex_correlation(recon, truth)?;
    let aligned = align_global_phase(recon, truth);

    let amp_r = aligned.amplitude();
    let amp_t = truth.amplitude();
    let phase_t = truth.phase();
    let phase_r = Zip::from(aligned.values())
        .and(&phase_t)
        .map_collect(|&v, &pt| pt + wrap(v.arg() - pt));

    let (ar8, at8) = to_8bit_range(&amp_r, &amp_t);
    let (pr8, pt8) = to_8bit_range(&phase_r, &phase_t);
    Ok(MetricsReport {
        ssim_amp: ssim_global(&ar8, &at8)?,
        ssim_phase: ssim_global(&pr8, &pt8)?,
        rmse_amp: rmse(&amp_r, &amp_t)?,
        rmse_phase: rmse(&phase_r, &phase_t)?,
        ecc: corr.norm(),
    })
}
