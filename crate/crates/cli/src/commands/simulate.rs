use holo_core::cfld;
use holo_core::propagation::{forward_stack, simulate_hologram_stack};
use holo_core::synth::derive_seed;
use holo_core::HologramStack;
use std::path::Path;

use crate::config::SimulateConfig;
use crate::error::Result;
use crate::manifest::{checksum_inputs, write_manifest};

pub const STACK_FILE: &str = "stack.cfld";

/// Hologram stack of a stored object field.
pub fn run_simulate(cfg: &SimulateConfig, seed: u64, out: &Path) -> Result<HologramStack> {
    cfg.validate()?;
    let input = cfg.input.as_deref().expect("validated");
    write_manifest(out, "simulate", seed, cfg, checksum_inputs(&[input])?)?;
    let field = cfld::load_field(input)?;
    let clean = forward_stack(&field, &cfg.zs)?;
    let sigma = cfg.noise.sigma_for(&clean);
    let stack = if sigma > 0.0 {
        simulate_hologram_stack(&field, &cfg.zs, sigma, derive_seed(seed, 0))?
    } else {
        clean
    };
    cfld::save_stack(out.join(STACK_FILE), &stack)?;
    Ok(stack)
}
