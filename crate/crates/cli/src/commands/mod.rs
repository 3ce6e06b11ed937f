//! Subcommand implementations. Each takes a resolved configuration, a seed
//! and an output directory, writes its manifest first and returns what it
//! produced so tests can inspect results without re-reading files.

mod eval;
mod gen;
mod infer;
mod simulate;
mod solve;
mod sweep;
mod train;

pub use eval::run_eval;
pub use gen::run_gen;
pub use infer::run_infer;
pub use simulate::run_simulate;
pub use solve::{reconstruct, run_solve};
pub use sweep::{run_sweep, SummaryRow, SweepOutcome, SweepRow};
pub use train::run_train;

use holo_core::cfld::{self, write_atomic};
use holo_core::loss::{total_loss, Estimate, LossReport, LossWeights};
use holo_core::metrics::{evaluate, MetricsReport};
use holo_core::{ComplexField, HologramStack};
use serde::Serialize;
use std::path::Path;

use crate::error::{CliError, Result};

pub const METRICS_FILE: &str = "metrics.csv";

pub fn recon_file(i: usize) -> String {
    format!("recon_{i:05}.cfld")
}

/// One line of `metrics.csv`. Truth-dependent columns stay empty when
/// evaluation is skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub index: usize,
    pub loss_total: f64,
    pub fdmae: f64,
    pub mse: f64,
    pub tv: f64,
    pub ecc: Option<f64>,
    pub ssim_amp: Option<f64>,
    pub ssim_phase: Option<f64>,
    pub rmse_amp: Option<f64>,
    pub rmse_phase: Option<f64>,
}

impl MetricsRow {
    pub fn new(index: usize, loss: &LossReport, metrics: Option<&MetricsReport>) -> Self {
        Self {
            index,
            loss_total: loss.total,
            fdmae: loss.fdmae,
            mse: loss.mse,
            tv: loss.tv,
            ecc: metrics.map(|m| m.ecc),
            ssim_amp: metrics.map(|m| m.ssim_amp),
            ssim_phase: metrics.map(|m| m.ssim_phase),
            rmse_amp: metrics.map(|m| m.rmse_amp),
            rmse_phase: metrics.map(|m| m.rmse_phase),
        }
    }
}

pub(crate) fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::data(e.to_string()))
}

pub(crate) fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

pub(crate) fn save_recons(out: &Path, fields: &[ComplexField]) -> Result<()> {
    for (i, f) in fields.iter().enumerate() {
        cfld::save_field(out.join(recon_file(i)), f)?;
    }
    Ok(())
}

pub(crate) fn field_loss(
    f: &ComplexField,
    stack: &HologramStack,
    w: &LossWeights,
) -> Result<LossReport> {
    Ok(total_loss(&Estimate::Field(f.clone()), stack, w)?)
}

/// Metrics rows for reconstructions; truth is only touched when `truth` is given.
pub(crate) fn metrics_rows(
    recons: &[ComplexField],
    losses: &[LossReport],
    truth: Option<&[ComplexField]>,
) -> Result<Vec<MetricsRow>> {
    if let Some(t) = truth {
        if t.len() != recons.len() {
            return Err(CliError::data(format!(
                "{} reconstructions but {} ground-truth fields",
                recons.len(),
                t.len()
            )));
        }
    }
    recons
        .iter()
        .zip(losses)
        .enumerate()
        .map(|(i, (r, l))| {
            let m = truth.map(|t| evaluate(r, &t[i])).transpose()?;
            Ok(MetricsRow::new(i, l, m.as_ref()))
        })
        .collect()
}

/// Refuse to write into a directory that already holds files.
pub(crate) fn ensure_empty_dir(out: &Path) -> Result<()> {
    if out.exists() {
        if !out.is_dir() {
            return Err(CliError::config(format!(
                "{} exists and is not a directory",
                out.display()
            )));
        }
        if std::fs::read_dir(out)?.next().is_some() {
            return Err(CliError::config(format!(
                "output directory {} is not empty",
                out.display()
            )));
        }
    }
    Ok(())
}
