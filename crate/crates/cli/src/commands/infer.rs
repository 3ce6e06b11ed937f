use holo_core::dataset::{read_objects, read_stacks};
use holo_core::loss::LossWeights;
use holo_core::ComplexField;
use holo_spaf::io::load_weights;
use holo_spaf::network_forward;
use rayon::prelude::*;
use std::path::Path;

use super::{field_loss, metrics_rows, save_recons, write_csv, MetricsRow, METRICS_FILE};
use crate::config::InferConfig;
use crate::error::{CliError, Result};
use crate::manifest::{checksum_inputs, write_manifest};

/// Network reconstructions of every stack. Ground truth is read only after
/// all forward passes, and only for evaluation.
pub fn run_infer(cfg: &InferConfig, seed: u64, out: &Path) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let data = cfg.data.as_deref().expect("validated");
    let weights_path = cfg.weights.as_deref().expect("validated");
    write_manifest(
        out,
        "infer",
        seed,
        cfg,
        checksum_inputs(&[data, weights_path])?,
    )?;
    let (header, weights) = load_weights::<f32>(weights_path)?;
    let net = header.cfg;
    let stacks = read_stacks(data)?;
    if let Some((i, s)) = stacks
        .iter()
        .enumerate()
        .find(|(_, s)| s.m() != net.m_inputs)
    {
        return Err(CliError::data(format!(
            "stack {i} has M = {} planes but the weights were trained for M = {}",
            s.m(),
            net.m_inputs
        )));
    }
    let recons = stacks
        .par_iter()
        .map(|s| network_forward(s, &weights, &net).map_err(CliError::from))
        .collect::<Result<Vec<ComplexField>>>()?;
    let lw = LossWeights::default();
    let losses = recons
        .iter()
        .zip(&stacks)
        .map(|(f, s)| field_loss(f, s, &lw))
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
