use holo_core::dataset::{read_objects, read_stacks};
use holo_core::solvers::{mhpr, variational_solve};
use holo_core::synth::derive_seed;
use holo_core::{ComplexField, HologramStack, SolveResult};
use rayon::prelude::*;
use std::path::Path;

use super::{field_loss, metrics_rows, save_recons, write_csv, MetricsRow, METRICS_FILE};
use crate::config::{Method, MethodConfig, SolveConfig};
use crate::error::Result;
use crate::manifest::{checksum_inputs, write_manifest};

/// Run the configured solver on one stack.
pub fn reconstruct(stack: &HologramStack, cfg: &MethodConfig, seed: u64) -> Result<SolveResult> {
    Ok(match cfg.method {
        Method::Mhpr => mhpr(stack, cfg.iters, None)?,
        Method::Var => variational_solve(stack, &cfg.solver(seed))?,
    })
}

/// Reconstruct every stack of a dataset; evaluate against truth unless disabled.
pub fn run_solve(cfg: &SolveConfig, seed: u64, out: &Path) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let data = cfg.data.as_deref().expect("validated");
    write_manifest(out, "solve", seed, cfg, checksum_inputs(&[data])?)?;
    let stacks = read_stacks(data)?;
    log::info!(
        "solving {} stacks with {:?}",
        stacks.len(),
        cfg.solver.method
    );
    let recons = stacks
        .par_iter()
        .enumerate()
        .map(|(i, s)| reconstruct(s, &cfg.solver, derive_seed(seed, i as u64)).map(|r| r.field()))
        .collect::<Result<Vec<ComplexField>>>()?;
    let losses = recons
        .iter()
        .zip(&stacks)
        .map(|(f, s)| field_loss(f, s, &cfg.solver.loss))
        .collect::<Result<Vec<_>>>()?;
    save_recons(out, &recons)?;
    let truth = if cfg.no_eval {
        None
    } else {
        Some(read_objects(data)?)
    };
    let rows = metrics_rows(&recons, &losses, truth.as_deref())?;
    write_csv(&out.join(METRICS_FILE), &rows)?;
    Ok(rows)
}
