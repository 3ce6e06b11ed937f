use holo_core::metrics::{evaluate, MetricsReport};
use holo_core::propagation::{forward_stack, simulate_hologram_stack};
use holo_core::solvers::refocus;
use holo_core::synth::{derive_seed, make_object, NoiseSpec};
use holo_core::{ComplexField, HologramStack, OpticalGrid};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

use super::{reconstruct, write_csv};
use crate::config::{SweepConfig, SweepParam};
use crate::error::{CliError, Result};
use crate::manifest::write_manifest;
use crate::plot::{line_plot_png, Series};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOT_FILE: &str = "sweep.png";

/// Long-form result: one reconstruction of one instance at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    /// `raw`, or `refocused` for dz sweeps with refocusing.
    pub variant: String,
    pub instance: usize,
    pub ecc: f64,
    pub ssim_amp: f64,
    pub ssim_phase: f64,
    pub rmse_amp: f64,
    pub rmse_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub param: String,
    pub value: f64,
    pub variant: String,
    pub count: usize,
    pub mean_ecc: f64,
    /// Standard error of the mean ECC.
    pub sem_ecc: f64,
    pub mean_ssim_amp: f64,
    pub mean_ssim_phase: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

impl SweepOutcome {
    pub fn summary_for(&self, value: f64, variant: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.value == value && r.variant == variant)
    }

    pub fn rows_for(&self, value: f64, variant: &str) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.value == value && r.variant == variant)
            .collect()
    }
}

fn simulate(
    field: &ComplexField,
    zs: &[f64],
    noise: NoiseSpec,
    seed: u64,
) -> Result<HologramStack> {
    let clean = forward_stack(field, zs)?;
    let sigma = noise.sigma_for(&clean);
    if sigma > 0.0 {
        Ok(simulate_hologram_stack(field, zs, sigma, seed)?)
    } else {
        Ok(clean)
    }
}

/// Measured stack for one grid point, labelled with the distances and grid
/// the solver will assume.
fn measurement(
    cfg: &SweepConfig,
    grid: &OpticalGrid,
    truth: &ComplexField,
    value: f64,
    seed: u64,
) -> Result<HologramStack> {
    match cfg.param {
        SweepParam::M => {
            let zs: Vec<f64> = (0..value as usize)
                .map(|k| cfg.z_base + k as f64 * cfg.z_step)
                .collect();
            simulate(truth, &zs, cfg.noise, seed)
        }
        SweepParam::Dz => {
            let shifted: Vec<f64> = cfg.zs.iter().map(|z| z + value).collect();
            Ok(simulate(truth, &shifted, cfg.noise, seed)?.with_zs(&cfg.zs)?)
        }
        SweepParam::Snr => simulate(truth, &cfg.zs, NoiseSpec::SnrDb(value), seed),
        SweepParam::Lambda => {
            let test_grid = grid.with_wavelength(value * 1e-3)?;
            let f = ComplexField::new(test_grid, truth.values().clone())?;
            let s = simulate(&f, &cfg.zs, cfg.noise, seed)?;
            Ok(HologramStack::new(*grid, s.planes().to_vec())?)
        }
    }
}

fn row(
    cfg: &SweepConfig,
    value: f64,
    variant: &str,
    instance: usize,
    m: &MetricsReport,
) -> SweepRow {
    SweepRow {
        param: cfg.param.to_string(),
        value,
        variant: variant.to_string(),
        instance,
        ecc: m.ecc,
        ssim_amp: m.ssim_amp,
        ssim_phase: m.ssim_phase,
        rmse_amp: m.rmse_amp,
        rmse_phase: m.rmse_phase,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sem(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

fn summarize(cfg: &SweepConfig, rows: &[SweepRow], variants: &[&str]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &value in &cfg.values {
        for &variant in variants {
            let sel: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.value == value && r.variant == variant)
                .collect();
            let ecc: Vec<f64> = sel.iter().map(|r| r.ecc).collect();
            out.push(SummaryRow {
                param: cfg.param.to_string(),
                value,
                variant: variant.to_string(),
                count: sel.len(),
                mean_ecc: mean(&ecc),
                sem_ecc: sem(&ecc),
                mean_ssim_amp: mean(&sel.iter().map(|r| r.ssim_amp).collect::<Vec<_>>()),
                mean_ssim_phase: mean(&sel.iter().map(|r| r.ssim_phase).collect::<Vec<_>>()),
            });
        }
    }
    out
}

/// Reconstruction quality over a one-parameter grid. The same objects are
/// used at every grid point; grid points and instances run in parallel.
pub fn run_sweep(cfg: &SweepConfig, seed: u64, out: &Path) -> Result<SweepOutcome> {
    cfg.validate()?;
    write_manifest(out, "sweep", seed, cfg, Default::default())?;
    let grid = cfg.grid.build()?;
    let synth = cfg.object.synth(&grid, seed)?;
    let truths = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            Ok(
                make_object(&synth, grid, cfg.object.kind, derive_seed(seed, i as u64))?
                    .into_field(),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let refocused = cfg.refocus && cfg.param == SweepParam::Dz;
    let variants: &[&str] = if refocused {
        &["raw", "refocused"]
    } else {
        &["raw"]
    };
    let tasks: Vec<(usize, usize)> = (0..cfg.values.len())
        .flat_map(|v| (0..cfg.count).map(move |i| (v, i)))
        .collect();
    log::info!(
        "sweeping {} over {} points x {} instances",
        cfg.param,
        cfg.values.len(),
        cfg.count
    );
    let per_task = tasks
        .par_iter()
        .map(|&(v, i)| -> Result<Vec<SweepRow>> {
            let value = cfg.values[v];
            let task_seed = derive_seed(derive_seed(seed, 1_000_000 + i as u64), v as u64);
            let stack = measurement(cfg, &grid, &truths[i], value, task_seed)?;
            let recon = reconstruct(&stack, &cfg.solver, task_seed)?.field();
            let mut rows = vec![row(cfg, value, "raw", i, &evaluate(&recon, &truths[i])?)];
            if refocused {
                let r = refocus(&recon, value);
                rows.push(row(cfg, value, "refocused", i, &evaluate(&r, &truths[i])?));
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = per_task.into_iter().flatten().collect();
    if rows.iter().any(|r| !r.ecc.is_finite()) {
        return Err(CliError::Numeric("non-finite metric in sweep".into()));
    }
    let summary = summarize(cfg, &rows, variants);

    write_csv(&out.join(SWEEP_FILE), &rows)?;
    write_csv(&out.join(SUMMARY_FILE), &summary)?;
    let series: Vec<Series> = variants
        .iter()
        .map(|&variant| Series {
            label: variant.to_string(),
            points: summary
                .iter()
                .filter(|s| s.variant == variant)
                .map(|s| (s.value, s.mean_ecc))
                .collect(),
        })
        .collect();
    holo_core::cfld::write_atomic(&out.join(PLOT_FILE), &line_plot_png(&series)?)?;
    Ok(SweepOutcome { rows, summary })
}
