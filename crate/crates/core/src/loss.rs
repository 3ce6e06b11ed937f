//! Physics-consistency objective and its analytic gradient.
//!
//! For an estimate `o` and measured amplitudes `i_m` at distances `z_m`, the
//! predicted holograms are `î_m = |propagate(o, z_m)|` and
//!
//! ```text
//! L = α·mean_m FDMAE(î_m, i_m) + β·mean_m MSE(î_m, i_m) + γ·TV(o)
//! ```
//!
//! In phase-only mode the estimate is a real map `p` with `o = exp(iπ·p)` and
//! the TV term is taken on `p`.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{HoloError, Result};
use crate::fft;
use crate::field::{ComplexField, HologramStack, PhaseMap};
use crate::propagation::{adjoint_propagate, propagate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    /// FDMAE 0.1, MSE 1, TV 20.
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 1.0,
            gamma: 20.0,
        }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(HoloError::InvalidArgument(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub fdmae: f64,
    pub mse: f64,
    pub tv: f64,
    pub total: f64,
}

impl LossReport {
    pub fn combine(fdmae: f64, mse: f64, tv: f64, w: &LossWeights) -> Self {
        Self {
            fdmae,
            mse,
            tv,
            total: w.alpha * fdmae + w.beta * mse + w.gamma * tv,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fdmae.is_finite()
            && self.mse.is_finite()
            && self.tv.is_finite()
            && self.total.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    Complex,
    PhaseOnly,
}

impl std::str::FromStr for LossMode {
    type Err = HoloError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex" => Ok(Self::Complex),
            "phase-only" => Ok(Self::PhaseOnly),
            _ => Err(HoloError::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

/// The quantity being optimised: a free complex field or a phase map.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Field(ComplexField),
    Phase(PhaseMap),
}

impl Estimate {
    pub fn mode(&self) -> LossMode {
        match self {
            Estimate::Field(_) => LossMode::Complex,
            Estimate::Phase(_) => LossMode::PhaseOnly,
        }
    }

    /// The complex object field this estimate describes.
    pub fn to_field(&self) -> ComplexField {
        match self {
            Estimate::Field(f) => f.clone(),
            Estimate::Phase(p) => p.to_field(),
        }
    }

    pub fn grid(&self) -> &crate::grid::OpticalGrid {
        match self {
            Estimate::Field(f) => f.grid(),
            Estimate::Phase(p) => p.grid(),
        }
    }
}

/// Gradient with the same shape as the estimate. For complex estimates the
/// value is `∂L/∂Re + i·∂L/∂Im` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub enum Gradient {
    Field(Array2<Complex64>),
    Phase(Array2<f64>),
}

/// Separable Hann window in spatial (un-shifted) order:
/// `w[y, x] = h(y)·h(x)`, `h(t) = ½(1 − cos(2πt/(n−1)))`.
pub fn hann2d(n: usize) -> Array2<f64> {
    assert!(n >= 2, "Hann window needs n >= 2");
    let h: Vec<f64> = (0..n)
        .map(|t| 0.5 * (1.0 - (2.0 * PI * t as f64 / (n - 1) as f64).cos()))
        .collect();
    Array2::from_shape_fn((n, n), |(r, c)| h[r] * h[c])
}

/// Hann window rotated so that its peak sits on the DC bin of an
/// FFT-ordered spectrum.
pub fn spectral_window(n: usize) -> Array2<f64> {
    fft::ifftshift(&hann2d(n))
}

fn windowed_spectrum(a: &Array2<f64>, w: &Array2<f64>) -> Array2<Complex64> {
    let mut s = fft::fft2_real(a);
    Zip::from(&mut s).and(w).for_each(|v, &wv| *v *= wv);
    s
}

fn plane_fdmae(pred: &Array2<f64>, meas: &Array2<f64>, w: &Array2<f64>) -> f64 {
    let a = windowed_spectrum(pred, w);
    let b = windowed_spectrum(meas, w);
    let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).sum();
    sum / pred.len() as f64
}

fn plane_mse(pred: &Array2<f64>, meas: &Array2<f64>) -> f64 {
    let sum: f64 = pred.iter().zip(meas).map(|(a, b)| (a - b) * (a - b)).sum();
    sum / pred.len() as f64
}

/// Fourier-domain mean absolute error between Hann-windowed spectra,
/// averaged over planes.
pub fn fdmae(pred: &HologramStack, meas: &HologramStack) -> Result<f64> {
    pred.check_matches(meas)?;
    let w = spectral_window(pred.grid().n());
    let total: f64 = pred
        .planes()
        .iter()
        .zip(meas.planes())
        .map(|(p, m)| plane_fdmae(p.amplitude(), m.amplitude(), &w))
        .sum();
    Ok(total / pred.m() as f64)
}

/// Mean squared amplitude difference, averaged over planes.
pub fn mse(pred: &HologramStack, meas: &HologramStack) -> Result<f64> {
    pred.check_matches(meas)?;
    let total: f64 = pred
        .planes()
        .iter()
        .zip(meas.planes())
        .map(|(p, m)| plane_mse(p.amplitude(), m.amplitude()))
        .sum();
    Ok(total / pred.m() as f64)
}

/// Σ of absolute forward differences along both axes; the last row/column
/// contributes nothing.
fn abs_forward_differences(a: &Array2<f64>) -> f64 {
    let (rows, cols) = a.dim();
    let mut sum = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let v = a[[r, c]];
            if c + 1 < cols {
                sum += (a[[r, c + 1]] - v).abs();
            }
            if r + 1 < rows {
                sum += (a[[r + 1, c]] - v).abs();
            }
        }
    }
    sum
}

/// Adds the subgradient of Σ|forward differences| of `a`, scaled, into `out`.
fn add_tv_subgradient(a: &Array2<f64>, scale: f64, out: &mut Array2<f64>) {
    let (rows, cols) = a.dim();
    for r in 0..rows {
        for c in 0..cols {
            let v = a[[r, c]];
            if c + 1 < cols {
                let s = sign(a[[r, c + 1]] - v) * scale;
                out[[r, c + 1]] += s;
                out[[r, c]] -= s;
            }
            if r + 1 < rows {
                let s = sign(a[[r + 1, c]] - v) * scale;
                out[[r + 1, c]] += s;
                out[[r, c]] -= s;
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Anisotropic TV of the real and imaginary parts, scaled by `1/(2N²)`.
pub fn tv_complex(f: &ComplexField) -> f64 {
    let re = f.values().mapv(|c| c.re);
    let im = f.values().mapv(|c| c.im);
    (abs_forward_differences(&re) + abs_forward_differences(&im)) / (2.0 * re.len() as f64)
}

/// Anisotropic TV of a real map, scaled by `1/N²`.
pub fn tv_phase(p: &Array2<f64>) -> f64 {
    abs_forward_differences(p) / p.len() as f64
}

fn check_grid(estimate: &Estimate, meas: &HologramStack) -> Result<()> {
    if estimate.grid() != meas.grid() {
        return Err(HoloError::StackMismatch(
            "estimate and measurement grids differ".into(),
        ));
    }
    Ok(())
}

struct PlaneTerms {
    fdmae: f64,
    mse: f64,
    /// ∂(α·FDMAE + β·MSE)/∂î for this plane, before the 1/M average.
    amp_grad: Option<Array2<f64>>,
    field: Array2<Complex64>,
}

fn plane_terms(
    field: &ComplexField,
    z: f64,
    meas: &Array2<f64>,
    window: &Array2<f64>,
    weights: &LossWeights,
    with_grad: bool,
) -> PlaneTerms {
    let u = propagate(field, z);
    let pred = u.values().mapv(|v| v.norm());
    let n2 = pred.len() as f64;

    let a = windowed_spectrum(&pred, window);
    let b = windowed_spectrum(meas, window);
    let mut diff = a - &b;
    let fd = diff.iter().map(|d| d.norm()).sum::<f64>() / n2;
    let ms = plane_mse(&pred, meas);

    let amp_grad = with_grad.then(|| {
        // windowed-spectrum sign carried back through the inverse transform
        Zip::from(&mut diff).and(window).for_each(|d, &w| {
            let m = d.norm();
            *d = if m > 0.0 {
                *d / m * w
            } else {
                Complex64::new(0.0, 0.0)
            };
        });
        let back = fft::ifft2(&diff);
        Zip::from(&back)
            .and(&pred)
            .and(meas)
            .map_collect(|&g, &p, &m| weights.alpha * g.re / n2 + weights.beta * 2.0 * (p - m) / n2)
    });
    PlaneTerms {
        fdmae: fd,
        mse: ms,
        amp_grad,
        field: u.into_values(),
    }
}

fn evaluate(
    estimate: &Estimate,
    meas: &HologramStack,
    weights: &LossWeights,
    with_grad: bool,
) -> Result<(LossReport, Option<Gradient>)> {
    check_grid(estimate, meas)?;
    weights.validate()?;
    let field = estimate.to_field();
    let n = field.grid().n();
    let m = meas.m() as f64;
    let window = spectral_window(n);

    let mut fd_sum = 0.0;
    let mut mse_sum = 0.0;
    let mut field_grad = with_grad.then(|| Array2::<Complex64>::zeros((n, n)));
    for plane in meas.planes() {
        let t = plane_terms(
            &field,
            plane.z(),
            plane.amplitude(),
            &window,
            weights,
            with_grad,
        );
        fd_sum += t.fdmae;
        mse_sum += t.mse;
        if let (Some(acc), Some(g_amp)) = (field_grad.as_mut(), t.amp_grad) {
            // lift to the pre-modulus field, zero where |u| = 0
            let g_u = Zip::from(&g_amp).and(&t.field).map_collect(|&g, &u| {
                let r = u.norm();
                if r > 0.0 {
                    u * (g / (r * m))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            let back = adjoint_propagate(&ComplexField::from_parts(*field.grid(), g_u), plane.z());
            *acc += back.values();
        }
    }
    let fdmae = fd_sum / m;
    let mse = mse_sum / m;

    let (tv, gradient) = match estimate {
        Estimate::Field(f) => {
            let tv = tv_complex(f);
            let grad = field_grad.map(|mut g| {
                let n2 = (n * n) as f64;
                let scale = weights.gamma / (2.0 * n2);
                let mut gre = Array2::zeros((n, n));
                let mut gim = Array2::zeros((n, n));
                if scale > 0.0 {
                    add_tv_subgradient(&f.values().mapv(|c| c.re), scale, &mut gre);
                    add_tv_subgradient(&f.values().mapv(|c| c.im), scale, &mut gim);
                }
                Zip::from(&mut g)
                    .and(&gre)
                    .and(&gim)
                    .for_each(|v, &r, &i| *v += Complex64::new(r, i));
                Gradient::Field(g)
            });
            (tv, grad)
        }
        Estimate::Phase(p) => {
            let tv = tv_phase(p.values());
            let grad = field_grad.map(|g| {
                // o = exp(iπp): dL/dp = Re(conj(G)·iπ·o)
                let o = field.values();
                let mut gp = Zip::from(&g)
                    .and(o)
                    .map_collect(|&gv, &ov| (gv.conj() * Complex64::new(0.0, PI) * ov).re);
                let scale = weights.gamma / (n * n) as f64;
                if scale > 0.0 {
                    add_tv_subgradient(p.values(), scale, &mut gp);
                }
                Gradient::Phase(gp)
            });
            (tv, grad)
        }
    };
    Ok((LossReport::combine(fdmae, mse, tv, weights), gradient))
}

/// Loss breakdown for an estimate against measured amplitudes.
pub fn total_loss(
    estimate: &Estimate,
    meas: &HologramStack,
    weights: &LossWeights,
) -> Result<LossReport> {
    evaluate(estimate, meas, weights, false).map(|(r, _)| r)
}

/// Exact (sub)gradient of [`total_loss`] with respect to the estimate.
pub fn loss_gradient_wrt_field(
    estimate: &Estimate,
    meas: &HologramStack,
    weights: &LossWeights,
) -> Result<Gradient> {
    loss_and_gradient(estimate, meas, weights).map(|(_, g)| g)
}

/// Loss and gradient in one pass.
pub fn loss_and_gradient(
    estimate: &Estimate,
    meas: &HologramStack,
    weights: &LossWeights,
) -> Result<(LossReport, Gradient)> {
    let (r, g) = evaluate(estimate, meas, weights, true)?;
    Ok((r, g.expect("gradient requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::HologramPlane;
    use crate::grid::OpticalGrid;
    use crate::propagation::forward_stack;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> OpticalGrid {
        OpticalGrid::with_defaults(n).unwrap()
    }

    fn stack_of(n: usize, planes: Vec<(f64, Array2<f64>)>) -> HologramStack {
        HologramStack::new(
            grid(n),
            planes
                .into_iter()
                .map(|(z, a)| HologramPlane::new(z, a).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn random_amp(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..2.0))
    }

    #[test]
    fn hann_values() {
        let w = hann2d(4);
        assert!((w[[1, 1]] - 0.5625).abs() < 1e-15);
        assert_eq!(w[[0, 0]], 0.0);
        let w5 = hann2d(5);
        assert!((w5[[2, 2]] - 1.0).abs() < 1e-15);
        // after rotation the peak region surrounds DC
        let s = spectral_window(8);
        let max = s.iter().copied().fold(0.0, f64::max);
        assert_eq!(s[[0, 0]], max);
        assert_eq!(s[[4, 4]], 0.0);
    }

    #[test]
    fn fdmae_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = stack_of(
            8,
            vec![
                (1.0, random_amp(8, &mut rng)),
                (2.0, random_amp(8, &mut rng)),
            ],
        );
        assert_eq!(fdmae(&a, &a).unwrap(), 0.0);

        let b = stack_of(
            8,
            vec![
                (1.0, random_amp(8, &mut rng)),
                (2.0, random_amp(8, &mut rng)),
            ],
        );
        let base = fdmae(&a, &b).unwrap();
        let scaled = fdmae(&a.scaled(3.0).unwrap(), &b.scaled(3.0).unwrap()).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-12 * scaled);
        assert!((fdmae(&b, &a).unwrap() - base).abs() < 1e-15);

        // a delta of height d at the origin has a flat unitary spectrum d/n
        let d = 0.7;
        let meas = random_amp(8, &mut rng);
        let mut pred = meas.clone();
        pred[[0, 0]] += d;
        let got = fdmae(
            &stack_of(8, vec![(5.0, pred)]),
            &stack_of(8, vec![(5.0, meas)]),
        )
        .unwrap();
        let wsum: f64 = hann2d(8).sum();
        let expect = d / 64.0 * wsum / 8.0;
        assert!((got - expect).abs() < 1e-13, "{got} vs {expect}");
    }

    #[test]
    fn mse_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a_img = random_amp(8, &mut rng);
        let a = stack_of(8, vec![(1.0, a_img.clone())]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let shifted = stack_of(8, vec![(1.0, a_img.mapv(|v| v + 0.25))]);
        assert!((mse(&shifted, &a).unwrap() - 0.0625).abs() < 1e-14);

        let b_img = random_amp(8, &mut rng);
        let b = stack_of(8, vec![(1.0, b_img.clone())]);
        let mut brute = 0.0;
        for r in 0..8 {
            for c in 0..8 {
                brute += (a_img[[r, c]] - b_img[[r, c]]).powi(2);
            }
        }
        assert!((mse(&a, &b).unwrap() - brute / 64.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_stacks_rejected() {
        let a = stack_of(8, vec![(1.0, Array2::zeros((8, 8)))]);
        let b = stack_of(8, vec![(2.0, Array2::zeros((8, 8)))]);
        assert!(fdmae(&a, &b).is_err());
        assert!(mse(&a, &b).is_err());
        let c = stack_of(
            8,
            vec![(1.0, Array2::zeros((8, 8))), (2.0, Array2::zeros((8, 8)))],
        );
        assert!(mse(&a, &c).is_err());
    }

    #[test]
    fn tv_cases() {
        let g = grid(8);
        let c = ComplexField::constant(g, Complex64::new(0.3, -2.0));
        assert_eq!(tv_complex(&c), 0.0);

        let step = Array2::from_shape_fn((8, 8), |(_, col)| if col >= 4 { 1.0 } else { 0.0 });
        let f = ComplexField::new(g, step.mapv(|v| Complex64::new(v, 0.0))).unwrap();
        assert!((tv_complex(&f) - 8.0 / (2.0 * 64.0)).abs() < 1e-15);
        let rotated = f.scale(Complex64::new(0.0, 1.0));
        assert_eq!(tv_complex(&rotated), tv_complex(&f));

        assert_eq!(tv_phase(&Array2::from_elem((8, 8), 4.0)), 0.0);
        assert!((tv_phase(&step) - 8.0 / 64.0).abs() < 1e-15);
        assert!((tv_phase(&step.mapv(|v| -2.5 * v)) - 2.5 * tv_phase(&step)).abs() < 1e-15);
    }

    #[test]
    fn consistent_output_costs_only_tv() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(16);
        let f = ComplexField::new(
            g,
            Array2::from_shape_fn((16, 16), |_| {
                Complex64::new(rng.gen_range(0.5..1.0), rng.gen_range(-0.5..0.5))
            }),
        )
        .unwrap();
        let meas = forward_stack(&f, &[300.0, 375.0]).unwrap();
        let w = LossWeights::default();
        let r = total_loss(&Estimate::Field(f.clone()), &meas, &w).unwrap();
        assert!(r.fdmae < 1e-15 && r.mse < 1e-28);
        assert!((r.total - w.gamma * r.tv).abs() < 1e-12);

        let zero_tv = LossWeights { gamma: 0.0, ..w };
        match loss_gradient_wrt_field(&Estimate::Field(f), &meas, &zero_tv).unwrap() {
            Gradient::Field(gr) => assert!(gr.iter().all(|v| v.norm() < 1e-10)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let f = ComplexField::constant(grid(8), Complex64::new(1.0, 0.0));
        let meas = stack_of(16, vec![(1.0, Array2::zeros((16, 16)))]);
        assert!(total_loss(&Estimate::Field(f), &meas, &LossWeights::default()).is_err());
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!((w.alpha, w.beta, w.gamma), (0.1, 1.0, 20.0));
        assert!(LossWeights::new(-1.0, 1.0, 1.0).is_err());
    }
}
