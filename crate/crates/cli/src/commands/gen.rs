use holo_core::dataset::{write_dataset, DatasetManifest};
use holo_core::synth::make_dataset;
use std::path::Path;

use super::ensure_empty_dir;
use crate::config::GenConfig;
use crate::error::Result;
use crate::manifest::write_manifest;

/// Synthetic dataset: one stack and one ground-truth object file per entry.
pub fn run_gen(cfg: &GenConfig, seed: u64, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    ensure_empty_dir(out)?;
    let grid = cfg.grid.build()?;
    let synth = cfg.object.synth(&grid, seed)?;
    write_manifest(out, "gen", seed, cfg, Default::default())?;
    log::info!("generating {} instances", cfg.count);
    let entries = make_dataset(
        &synth,
        grid,
        &cfg.z,
        cfg.count,
        cfg.noise,
        cfg.object.kind,
        seed,
    )?;
    Ok(write_dataset(
        out,
        &entries,
        &synth,
        grid,
        seed,
        &cfg.z,
        cfg.noise,
        cfg.object.kind,
    )?)
}
