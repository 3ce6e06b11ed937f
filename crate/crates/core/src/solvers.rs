//! Reconstruction from hologram stacks: multi-height phase retrieval,
//! direct minimisation of the physics-consistency loss, autofocusing and
//! refocusing.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::time::Instant;

use crate::error::{HoloError, Result};
use crate::field::{ComplexField, HologramStack, PhaseMap};
use crate::loss::{
    loss_and_gradient, total_loss, Estimate, Gradient, LossMode, LossReport, LossWeights,
};
use crate::optim::{Adam, LrSchedule, DEFAULT_LR};
use crate::propagation::propagate;

/// Consecutive small-change steps required before early stopping.
pub const EARLY_STOP_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub weights: LossWeights,
    pub mode: LossMode,
    /// Relative change of the total loss below which a step counts as stalled.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            lr: DEFAULT_LR,
            lr_schedule: LrSchedule::CosineAnnealing,
            weights: LossWeights::default(),
            mode: LossMode::Complex,
            tol: 1e-7,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(HoloError::InvalidArgument(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(HoloError::InvalidArgument(format!(
                "tol must be >= 0, got {}",
                self.tol
            )));
        }
        self.weights.validate()
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub estimate: Estimate,
    pub loss_trace: Vec<LossReport>,
    pub iterations_run: usize,
    pub wall_time: f64,
}

impl SolveResult {
    pub fn field(&self) -> ComplexField {
        self.estimate.to_field()
    }
}

/// Back-propagated first hologram: its amplitude with zero phase,
/// propagated by `-z₁`.
pub fn default_init(stack: &HologramStack) -> ComplexField {
    let first = &stack.planes()[0];
    let lifted = ComplexField::new(
        *stack.grid(),
        first.amplitude().mapv(|a| Complex64::new(a, 0.0)),
    )
    .expect("finite amplitudes");
    propagate(&lifted, -first.z())
}

fn replace_amplitude(u: &ComplexField, amplitude: &Array2<f64>) -> ComplexField {
    let values = ndarray::Zip::from(u.values())
        .and(amplitude)
        .map_collect(|&v, &a| {
            let r = v.norm();
            if r > 0.0 {
                v * (a / r)
            } else {
                Complex64::new(a, 0.0)
            }
        });
    ComplexField::new(*u.grid(), values).expect("finite")
}

/// Multi-height phase retrieval. Each iteration visits every plane in
/// ascending z: propagate to the plane, impose the measured amplitude while
/// keeping the phase, and propagate back to the object plane.
pub fn mhpr(
    stack: &HologramStack,
    iters: usize,
    init: Option<&ComplexField>,
) -> Result<SolveResult> {
    let start = Instant::now();
    let stack = stack.sorted_by_z();
    let mut field = match init {
        Some(f) => {
            if f.grid() != stack.grid() {
                return Err(HoloError::StackMismatch(
                    "init grid differs from stack grid".into(),
                ));
            }
            f.clone()
        }
        None => default_init(&stack),
    };
    let weights = LossWeights::default();
    let mut trace = Vec::with_capacity(iters + 1);
    trace.push(total_loss(
        &Estimate::Field(field.clone()),
        &stack,
        &weights,
    )?);
    for _ in 0..iters {
        for plane in stack.planes() {
            let u = propagate(&field, plane.z());
            let u = replace_amplitude(&u, plane.amplitude());
            field = propagate(&u, -plane.z());
        }
        trace.push(total_loss(
            &Estimate::Field(field.clone()),
            &stack,
            &weights,
        )?);
    }
    Ok(SolveResult {
        estimate: Estimate::Field(field),
        loss_trace: trace,
        iterations_run: iters,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn pack(estimate: &Estimate) -> Vec<f64> {
    match estimate {
        Estimate::Field(f) => {
            let v = f.values();
            v.iter()
                .map(|c| c.re)
                .chain(v.iter().map(|c| c.im))
                .collect()
        }
        Estimate::Phase(p) => p.values().iter().copied().collect(),
    }
}

fn unpack(params: &[f64], template: &Estimate) -> Result<Estimate> {
    let grid = *template.grid();
    let n = grid.n();
    match template {
        Estimate::Field(_) => {
            let len = n * n;
            let values = Array2::from_shape_fn((n, n), |(r, c)| {
                let i = r * n + c;
                Complex64::new(params[i], params[len + i])
            });
            Ok(Estimate::Field(ComplexField::new(grid, values)?))
        }
        Estimate::Phase(_) => Ok(Estimate::Phase(PhaseMap::new(
            grid,
            Array2::from_shape_vec((n, n), params.to_vec()).expect("n×n"),
        )?)),
    }
}

fn pack_gradient(g: &Gradient) -> Vec<f64> {
    match g {
        Gradient::Field(v) => v
            .iter()
            .map(|c| c.re)
            .chain(v.iter().map(|c| c.im))
            .collect(),
        Gradient::Phase(v) => v.iter().copied().collect(),
    }
}

/// Initial estimate for [`variational_solve`] in the requested mode.
pub fn variational_init(stack: &HologramStack, mode: LossMode) -> Estimate {
    let f = default_init(&stack.sorted_by_z());
    match mode {
        LossMode::Complex => Estimate::Field(f),
        LossMode::PhaseOnly => Estimate::Phase(PhaseMap::from_parts(
            *f.grid(),
            f.values().mapv(|c| c.arg() / PI),
        )),
    }
}

/// Adam on the physics-consistency loss starting from [`variational_init`].
pub fn variational_solve(stack: &HologramStack, cfg: &SolverConfig) -> Result<SolveResult> {
    let init = variational_init(stack, cfg.mode);
    variational_solve_from(stack, cfg, init)
}

/// Adam on the physics-consistency loss from an explicit starting point.
/// Returns the lowest-loss iterate seen; phase-only results are reported
/// with their mean removed.
pub fn variational_solve_from(
    stack: &HologramStack,
    cfg: &SolverConfig,
    init: Estimate,
) -> Result<SolveResult> {
    cfg.validate()?;
    if init.mode() != cfg.mode {
        return Err(HoloError::InvalidArgument(
            "initial estimate does not match solver mode".into(),
        ));
    }
    let start = Instant::now();
    let mut params = pack(&init);
    let mut adam = Adam::<f64>::new(params.len());
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut best = (f64::INFINITY, params.clone());
    let mut stalled = 0usize;
    let mut iterations = 0usize;

    for t in 0..cfg.max_iters {
        let est = unpack(&params, &init)?;
        let (report, grad) = loss_and_gradient(&est, stack, &cfg.weights)?;
        if !report.is_finite() {
            return Err(HoloError::NonFinite("loss during variational solve"));
        }
        if report.total < best.0 {
            best = (report.total, params.clone());
        }
        if let Some(prev) = trace.last().map(|r: &LossReport| r.total) {
            let rel = (report.total - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            stalled = if rel < cfg.tol { stalled + 1 } else { 0 };
        }
        trace.push(report);
        if stalled >= EARLY_STOP_WINDOW {
            break;
        }
        let lr = cfg.lr_schedule.lr_at(cfg.lr, t, cfg.max_iters);
        adam.step(&mut params, &pack_gradient(&grad), lr);
        iterations = t + 1;
    }
    let final_est = unpack(&params, &init)?;
    let final_report = total_loss(&final_est, stack, &cfg.weights)?;
    if final_report.total < best.0 {
        best = (final_report.total, params);
    }
    trace.push(final_report);

    let estimate = match unpack(&best.1, &init)? {
        Estimate::Phase(p) => Estimate::Phase(p.mean_subtracted()),
        e => e,
    };
    Ok(SolveResult {
        estimate,
        loss_trace: trace,
        iterations_run: iterations,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Tamura coefficient `√(σ/μ)` of the gradient magnitude of `|f|`
/// (forward differences, zero past the last row/column). Larger is sharper.
pub fn edge_sparsity_score(f: &ComplexField) -> Result<f64> {
    let amp = f.amplitude();
    let (rows, cols) = amp.dim();
    let mut mags = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = amp[[r, c]];
            let gx = if c + 1 < cols {
                amp[[r, c + 1]] - v
            } else {
                0.0
            };
            let gy = if r + 1 < rows {
                amp[[r + 1, c]] - v
            } else {
                0.0
            };
            mags.push((gx * gx + gy * gy).sqrt());
        }
    }
    let n = mags.len() as f64;
    let mean = mags.iter().sum::<f64>() / n;
    if mean <= 1e-12 {
        return Err(HoloError::DegenerateMean {
            magnitude: mean,
            eps: 1e-12,
        });
    }
    let var = mags.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
    Ok((var.sqrt() / mean).sqrt())
}

fn focus_score(hologram: &ComplexField, z: f64) -> f64 {
    edge_sparsity_score(&propagate(hologram, -z)).unwrap_or(f64::NEG_INFINITY)
}

/// Estimate the sample-to-sensor distance of a single hologram by
/// maximising [`edge_sparsity_score`] of its zero-phase back-propagation:
/// a coarse scan over `[lo, hi]` followed by golden-section refinement
/// around the best coarse candidate.
pub fn autofocus_search(
    hologram: &HologramStack,
    z_range: (f64, f64),
    coarse_step: f64,
    refine_iters: usize,
) -> Result<f64> {
    let (lo, hi) = z_range;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(HoloError::InvalidArgument(format!(
            "bad z range [{lo}, {hi}]"
        )));
    }
    if lo == hi {
        return Ok(lo);
    }
    if !(coarse_step.is_finite() && coarse_step > 0.0) {
        return Err(HoloError::InvalidArgument(format!(
            "coarse step must be > 0, got {coarse_step}"
        )));
    }
    let plane = &hologram.planes()[0];
    let lifted = ComplexField::new(
        *hologram.grid(),
        plane.amplitude().mapv(|a| Complex64::new(a, 0.0)),
    )?;

    let steps = ((hi - lo) / coarse_step).floor() as usize;
    let mut candidates: Vec<f64> = (0..=steps).map(|i| lo + i as f64 * coarse_step).collect();
    if *candidates.last().expect("nonempty") < hi {
        candidates.push(hi);
    }
    let (mut best_z, mut best_s) = (lo, f64::NEG_INFINITY);
    for &z in &candidates {
        let s = focus_score(&lifted, z);
        if s > best_s {
            best_z = z;
            best_s = s;
        }
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = (best_z - coarse_step).max(lo);
    let mut b = (best_z + coarse_step).min(hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = focus_score(&lifted, c);
    let mut fd = focus_score(&lifted, d);
    for _ in 0..refine_iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = focus_score(&lifted, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = focus_score(&lifted, d);
        }
    }
    let (z_ref, s_ref) = if fc > fd { (c, fc) } else { (d, fd) };
    Ok(if s_ref >= best_s { z_ref } else { best_z })
}

/// Move a reconstruction that was made `delta_z` downstream of focus back
/// into focus: `propagate(f, -delta_z)`. A zero shift returns `f` untouched
/// rather than stripping its evanescent band.
pub fn refocus(f: &ComplexField, delta_z: f64) -> ComplexField {
    if delta_z == 0.0 {
        return f.clone();
    }
    propagate(f, -delta_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::OpticalGrid;
    use crate::metrics::evaluate;
    use crate::propagation::{band_limit, forward_stack};
    use crate::synth::{make_object, ObjectKind, SynthConfig};

    fn object(n: usize, seed: u64, band: bool) -> ComplexField {
        let cfg = SynthConfig {
            n,
            band_limit: band,
            ..SynthConfig::default()
        };
        make_object(
            &cfg,
            OpticalGrid::with_defaults(n).unwrap(),
            ObjectKind::AmplitudePhase,
            seed,
        )
        .unwrap()
        .into_field()
    }

    fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn mhpr_fixed_point_at_truth() {
        let o = object(32, 1, true);
        let stack = forward_stack(&o, &[300.0, 320.0, 340.0]).unwrap();
        let r = mhpr(&stack, 5, Some(&o)).unwrap();
        assert!(max_diff(&r.field(), &o) < 1e-10);
    }

    #[test]
    fn mhpr_single_plane_matches_measurement() {
        // short wavelength: every sampled frequency propagates, so amplitude
        // replacement is not undone by the evanescent cutoff
        let grid = OpticalGrid::new(32, 0.37, 0.5, 1.0).unwrap();
        let cfg = SynthConfig {
            n: 32,
            ..SynthConfig::default()
        };
        let o = make_object(&cfg, grid, ObjectKind::AmplitudePhase, 2)
            .unwrap()
            .into_field();
        let stack = forward_stack(&o, &[310.0]).unwrap();
        let r = mhpr(&stack, 1, None).unwrap();
        let again = propagate(&r.field(), 310.0).amplitude();
        for (a, b) in again.iter().zip(stack.planes()[0].amplitude()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(r.loss_trace.len(), 2);
    }

    #[test]
    fn variational_stationary_at_truth() {
        let o = object(16, 3, false);
        let stack = forward_stack(&o, &[300.0, 375.0]).unwrap();
        let cfg = SolverConfig {
            max_iters: 20,
            weights: LossWeights {
                gamma: 0.0,
                ..LossWeights::default()
            },
            ..SolverConfig::default()
        };
        let r = variational_solve_from(&stack, &cfg, Estimate::Field(o.clone())).unwrap();
        assert!(max_diff(&r.field(), &o) < 1e-12);
    }

    #[test]
    fn variational_does_not_increase_loss() {
        let o = object(16, 4, false);
        let stack = forward_stack(&o, &[300.0, 375.0]).unwrap();
        let cfg = SolverConfig {
            max_iters: 100,
            ..SolverConfig::default()
        };
        let r = variational_solve(&stack, &cfg).unwrap();
        let first = r.loss_trace.first().unwrap().total;
        let best = total_loss(&r.estimate, &stack, &cfg.weights).unwrap().total;
        assert!(best <= first);
        assert_eq!(r.iterations_run, 100);
    }

    #[test]
    fn variational_zero_steps_returns_init() {
        let o = object(16, 5, false);
        let stack = forward_stack(&o, &[300.0]).unwrap();
        let cfg = SolverConfig {
            max_iters: 0,
            ..SolverConfig::default()
        };
        let r = variational_solve(&stack, &cfg).unwrap();
        assert_eq!(r.field(), default_init(&stack));
    }

    #[test]
    fn phase_only_output_has_unit_modulus() {
        let cfg = SynthConfig {
            n: 16,
            ..SynthConfig::default()
        };
        let o = make_object(
            &cfg,
            OpticalGrid::with_defaults(16).unwrap(),
            ObjectKind::PhaseOnly,
            6,
        )
        .unwrap()
        .into_field();
        let stack = forward_stack(&o, &[300.0, 375.0]).unwrap();
        let scfg = SolverConfig {
            max_iters: 50,
            mode: LossMode::PhaseOnly,
            ..SolverConfig::default()
        };
        let r = variational_solve(&stack, &scfg).unwrap();
        match &r.estimate {
            Estimate::Phase(p) => assert!(p.values().mean().unwrap().abs() < 1e-12),
            _ => panic!("expected a phase map"),
        }
        assert!(r
            .field()
            .values()
            .iter()
            .all(|c| (c.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sharpness_basics() {
        let o = object(32, 7, false);
        let flat = ComplexField::constant(*o.grid(), Complex64::new(2.0, 0.0));
        assert!(matches!(
            edge_sparsity_score(&flat),
            Err(HoloError::DegenerateMean { .. })
        ));
        let s = edge_sparsity_score(&o).unwrap();
        let rotated = o.scale(Complex64::from_polar(1.0, 1.3));
        assert!((edge_sparsity_score(&rotated).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn autofocus_degenerate_range() {
        let o = object(16, 8, false);
        let stack = forward_stack(&o, &[300.0]).unwrap();
        assert_eq!(
            autofocus_search(&stack, (310.0, 310.0), 5.0, 10).unwrap(),
            310.0
        );
        assert!(autofocus_search(&stack, (320.0, 310.0), 5.0, 10).is_err());
    }

    #[test]
    fn refocus_round_trip() {
        let o = band_limit(&object(16, 9, false));
        assert!(max_diff(&refocus(&o, 0.0), &o) < 1e-12);
        assert!(max_diff(&refocus(&refocus(&o, 15.0), -15.0), &o) < 1e-10);
    }

    #[test]
    fn mhpr_eight_heights_converges() {
        let o = object(64, 10, false);
        let zs: Vec<f64> = (0..8).map(|i| 300.0 + 15.0 * i as f64).collect();
        let stack = forward_stack(&o, &zs).unwrap();
        let r = mhpr(&stack, 100, None).unwrap();
        assert!(evaluate(&r.field(), &o).unwrap().ecc >= 0.99);
    }
}
