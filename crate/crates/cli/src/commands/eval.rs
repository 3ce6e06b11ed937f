use holo_core::cfld;
use holo_core::dataset::{read_manifest, read_objects, read_stacks};
use holo_core::loss::LossWeights;
use std::path::{Path, PathBuf};

use super::{field_loss, metrics_rows, recon_file, write_csv, MetricsRow, METRICS_FILE};
use crate::config::EvalConfig;
use crate::error::{CliError, Result};
use crate::manifest::{checksum_inputs, write_manifest};

/// Compare stored reconstructions with a dataset's ground truth.
pub fn run_eval(cfg: &EvalConfig, seed: u64, out: &Path) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let recon_dir = cfg.recon.as_deref().expect("validated");
    let data = cfg.data.as_deref().expect("validated");
    let count = read_manifest(data)?.count;
    let recon_paths: Vec<PathBuf> = (0..count).map(|i| recon_dir.join(recon_file(i))).collect();
    let mut inputs: Vec<&Path> = vec![data];
    inputs.extend(recon_paths.iter().map(PathBuf::as_path));
    write_manifest(out, "eval", seed, cfg, checksum_inputs(&inputs)?)?;
    let stacks = read_stacks(data)?;
    let recons = recon_paths
        .iter()
        .map(|p| cfld::load_field(p).map_err(|e| CliError::data(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>>>()?;
    let lw = LossWeights::default();
    let losses = recons
        .iter()
        .zip(&stacks)
        .map(|(f, s)| field_loss(f, s, &lw))
        .collect::<Result<Vec<_>>>()?;
    let truth = read_objects(data)?;
    let rows = metrics_rows(&recons, &losses, Some(&truth))?;
    write_csv(&out.join(METRICS_FILE), &rows)?;
    Ok(rows)
}
