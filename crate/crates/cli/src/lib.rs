//! `holo` command-line driver.
//!
//! Configuration is resolved in three layers: built-in defaults, the JSON
//! file given by `--config`, then individual flags.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;

use clap::{Args, Parser, Subcommand};
use holo_core::loss::LossMode;
use holo_core::synth::{NoiseSpec, ObjectKind};
use holo_spaf::OutputNorm;
use std::path::PathBuf;

use crate::config::{parse_list, parse_noise, parse_values, FileConfig, Method, SweepParam};
pub use crate::error::{CliError, Result};

/// Parsed as one comma-separated argument rather than repeated flags.
type FloatList = Vec<f64>;

#[derive(Debug, Parser)]
#[command(
    name = "holo",
    version,
    about = "Synthetic in-line holography: data, solvers, training and sweeps"
)]
pub struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of hologram stacks and ground-truth objects.
    Gen(GenArgs),
    /// Simulate a hologram stack from a stored object field.
    Simulate(SimulateArgs),
    /// Reconstruct a dataset with MHPR or the variational solver.
    Solve(SolveArgs),
    /// Train the network on a dataset's hologram stacks.
    Train(TrainArgs),
    /// Reconstruct a dataset with trained weights.
    Infer(InferArgs),
    /// Evaluate stored reconstructions against ground truth.
    Eval(EvalArgs),
    /// Reconstruction quality over a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Comma-separated distances in µm.
    #[arg(long, value_parser = parse_list)]
    pub zs: Option<FloatList>,
    /// `fixed`, `uniform:lo:hi` or `uniform:lo:hi:m`.
    #[arg(long)]
    pub z_mode: Option<String>,
    /// `none`, `snr:<dB>` or `sigma:<value>`.
    #[arg(long, value_parser = parse_noise)]
    pub noise: Option<NoiseSpec>,
    /// `amplitude-phase` or `phase-only`.
    #[arg(long)]
    pub kind: Option<ObjectKind>,
    #[arg(long)]
    pub band_limit: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_parser = parse_list)]
    pub zs: Option<FloatList>,
    #[arg(long, value_parser = parse_noise)]
    pub noise: Option<NoiseSpec>,
}

/// Solver flags shared by `solve` and `sweep`.
#[derive(Debug, Args)]
pub struct MethodArgs {
    /// `mhpr` or `var`.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// `complex` or `phase-only`.
    #[arg(long)]
    pub mode: Option<LossMode>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Do not read ground truth.
    #[arg(long)]
    pub no_eval: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Comma-separated half window sizes, one per block.
    #[arg(long, value_delimiter = ',')]
    pub half_windows: Option<Vec<usize>>,
    #[arg(long)]
    pub recursion: Option<usize>,
    /// `mean-phase` or `complex-mean`.
    #[arg(long)]
    pub output_norm: Option<OutputNorm>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub no_eval: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory holding `recon_*.cfld`.
    #[arg(long)]
    pub recon: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `M`, `dz`, `snr` or `lambda` (nm).
    #[arg(long)]
    pub param: Option<SweepParam>,
    /// Values such as `1,2,4`, `-20..20` (step 10) or `500..560..10`.
    #[arg(long, value_parser = parse_values)]
    pub values: Option<FloatList>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_parser = parse_list)]
    pub zs: Option<FloatList>,
    #[arg(long, value_parser = parse_noise)]
    pub noise: Option<NoiseSpec>,
    /// Also report dz reconstructions propagated back into focus.
    #[arg(long)]
    pub refocus: bool,
    #[command(flatten)]
    pub method: MethodArgs,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_method(m: &mut config::MethodConfig, a: MethodArgs) {
    set(&mut m.method, a.method);
    set(&mut m.iters, a.iters);
    set(&mut m.steps, a.steps);
    set(&mut m.lr, a.lr);
    set(&mut m.mode, a.mode);
    set(&mut m.loss.alpha, a.alpha);
    set(&mut m.loss.beta, a.beta);
    set(&mut m.loss.gamma, a.gamma);
}

fn some_path(p: Option<PathBuf>) -> Option<Option<PathBuf>> {
    p.map(Some)
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    if let Some(t) = cli.threads.or(file.threads) {
        if t == 0 {
            return Err(CliError::config("--threads must be >= 1"));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let out = cli
        .out
        .ok_or_else(|| CliError::config("--out is required"))?;

    match cli.command {
        Command::Gen(a) => {
            let c = &mut file.gen;
            set(&mut c.grid.n, a.n);
            set(&mut c.count, a.count);
            set(&mut c.noise, a.noise);
            set(&mut c.object.kind, a.kind);
            c.object.band_limit |= a.band_limit;
            match (a.z_mode, a.zs) {
                (Some(mode), zs) => {
                    c.z = config::parse_z_mode(&mode, zs.as_deref()).map_err(CliError::Config)?;
                }
                (None, Some(zs)) => c.z = holo_core::synth::ZSpec::Fixed { zs },
                (None, None) => {}
            }
            let m = commands::run_gen(c, seed, &out)?;
            log::info!("wrote {} instances to {}", m.count, out.display());
        }
        Command::Simulate(a) => {
            let c = &mut file.simulate;
            set(&mut c.input, some_path(a.input));
            set(&mut c.zs, a.zs);
            set(&mut c.noise, a.noise);
            commands::run_simulate(c, seed, &out)?;
        }
        Command::Solve(a) => {
            let c = &mut file.solve;
            set(&mut c.data, some_path(a.data));
            apply_method(&mut c.solver, a.method);
            c.no_eval |= a.no_eval;
            let rows = commands::run_solve(c, seed, &out)?;
            report_mean_ecc(&rows);
        }
        Command::Train(a) => {
            let c = &mut file.train;
            set(&mut c.data, some_path(a.data));
            set(&mut c.train.epochs, a.epochs);
            set(&mut c.train.batch_size, a.batch_size);
            set(&mut c.train.lr, a.lr);
            set(&mut c.train.loss.gamma, a.gamma);
            set(&mut c.train.val_fraction, a.val_fraction);
            set(&mut c.net.channels, a.channels);
            set(&mut c.net.blocks, a.blocks);
            set(&mut c.net.half_windows, a.half_windows);
            set(&mut c.net.recursion, a.recursion);
            set(&mut c.net.output_norm, a.output_norm);
            let o = commands::run_train(c, seed, &out)?;
            log::info!(
                "kept epoch {} (validation loss {:.5})",
                o.log.best_epoch,
                o.log.best_val_loss
            );
        }
        Command::Infer(a) => {
            let c = &mut file.infer;
            set(&mut c.data, some_path(a.data));
            set(&mut c.weights, some_path(a.weights));
            c.no_eval |= a.no_eval;
            let rows = commands::run_infer(c, seed, &out)?;
            report_mean_ecc(&rows);
        }
        Command::Eval(a) => {
            let c = &mut file.eval;
            set(&mut c.recon, some_path(a.recon));
            set(&mut c.data, some_path(a.data));
            let rows = commands::run_eval(c, seed, &out)?;
            report_mean_ecc(&rows);
        }
        Command::Sweep(a) => {
            let c = &mut file.sweep;
            set(&mut c.param, a.param);
            set(&mut c.values, a.values);
            set(&mut c.count, a.count);
            set(&mut c.grid.n, a.n);
            set(&mut c.zs, a.zs);
            set(&mut c.noise, a.noise);
            c.refocus |= a.refocus;
            apply_method(&mut c.solver, a.method);
            let o = commands::run_sweep(c, seed, &out)?;
            for s in &o.summary {
                log::info!(
                    "{}={} {}: mean ECC {:.4} ± {:.4}",
                    s.param,
                    s.value,
                    s.variant,
                    s.mean_ecc,
                    s.sem_ecc
                );
            }
        }
    }
    Ok(())
}

fn report_mean_ecc(rows: &[commands::MetricsRow]) {
    let ecc: Vec<f64> = rows.iter().filter_map(|r| r.ecc).collect();
    if !ecc.is_empty() {
        log::info!(
            "mean ECC {:.4} over {} instances",
            ecc.iter().sum::<f64>() / ecc.len() as f64,
            ecc.len()
        );
    }
}
