use holo_core::dataset::read_stacks;
use holo_spaf::io::save_weights;
use holo_spaf::train::{train_observed, TrainEvent};
use holo_spaf::TrainOutcome;
use std::path::Path;

use super::write_json;
use crate::config::TrainCmdConfig;
use crate::error::{CliError, Result};
use crate::manifest::{checksum_inputs, write_manifest};

pub const WEIGHTS_FILE: &str = "weights.spaf";
pub const TRAIN_LOG_FILE: &str = "train_log.json";

/// Self-supervised training on a dataset's hologram stacks. Object files are
/// never opened.
pub fn run_train(cfg: &TrainCmdConfig, seed: u64, out: &Path) -> Result<TrainOutcome<f32>> {
    let mut cfg = cfg.clone();
    cfg.train.seed = seed;
    cfg.validate()?;
    let data = cfg.data.clone().expect("validated");
    write_manifest(out, "train", seed, &cfg, checksum_inputs(&[&data])?)?;
    let stacks = read_stacks(&data)?;
    for (i, s) in stacks.iter().enumerate() {
        if s.m() != cfg.net.m_inputs || s.grid().n() != cfg.net.n {
            return Err(CliError::data(format!(
                "stack {i} is {}x{}x{} but the network expects {}x{}x{}",
                s.m(),
                s.grid().n(),
                s.grid().n(),
                cfg.net.m_inputs,
                cfg.net.n,
                cfg.net.n
            )));
        }
    }
    log::info!(
        "training on {} stacks for {} epochs",
        stacks.len(),
        cfg.train.epochs
    );
    let outcome = train_observed::<f32, _>(&stacks, &cfg.net, &cfg.train, |e| {
        if let TrainEvent::Epoch(e) = e {
            log::info!(
                "epoch {}: train {:.5} val {:.5}",
                e.epoch,
                e.train_loss,
                e.val_loss
            );
        }
    })?;
    save_weights(
        &out.join(WEIGHTS_FILE),
        &outcome.weights,
        &cfg.net,
        seed,
        &outcome.fingerprint,
    )?;
    write_json(&out.join(TRAIN_LOG_FILE), &outcome.log)?;
    Ok(outcome)
}
