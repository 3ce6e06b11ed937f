//! JSON run configuration. One optional section per subcommand; command-line
//! flags override individual fields after the file is loaded.

use holo_core::loss::{LossMode, LossWeights};
use holo_core::optim::{LrSchedule, DEFAULT_LR};
use holo_core::synth::{NoiseSpec, ObjectKind, SynthConfig, ZSpec, DEFAULT_SMOOTHING_RADIUS};
use holo_core::OpticalGrid;
use holo_spaf::{SpafConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    pub pitch_um: f64,
    pub wavelength_um: f64,
    pub refractive_index: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 64,
            pitch_um: holo_core::grid::DEFAULT_PITCH_UM,
            wavelength_um: holo_core::grid::DEFAULT_WAVELENGTH_UM,
            refractive_index: 1.0,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<OpticalGrid> {
        OpticalGrid::new(
            self.n,
            self.pitch_um,
            self.wavelength_um,
            self.refractive_index,
        )
        .map_err(|e| CliError::config(e.to_string()))
    }
}

/// Object generator parameters shared by `gen` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectConfig {
    pub kind: ObjectKind,
    pub delta: f64,
    pub phase_scale: f64,
    pub smoothing_radius: usize,
    pub band_limit: bool,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self {
            kind: ObjectKind::AmplitudePhase,
            delta: 0.1,
            phase_scale: PI,
            smoothing_radius: DEFAULT_SMOOTHING_RADIUS,
            band_limit: false,
        }
    }
}

impl ObjectConfig {
    pub fn synth(&self, grid: &OpticalGrid, seed: u64) -> Result<SynthConfig> {
        let cfg = SynthConfig {
            n: grid.n(),
            delta: self.delta,
            phase_scale: self.phase_scale,
            smoothing_radius: self.smoothing_radius,
            seed,
            band_limit: self.band_limit,
        };
        cfg.validate(grid)
            .map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub grid: GridConfig,
    pub object: ObjectConfig,
    pub count: usize,
    pub z: ZSpec,
    pub noise: NoiseSpec,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            object: ObjectConfig::default(),
            count: 8,
            z: ZSpec::standard_pair(),
            noise: NoiseSpec::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        if self.count == 0 {
            return Err(CliError::config("count must be >= 1"));
        }
        self.z
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        validate_noise(&self.noise)
    }
}

fn validate_noise(n: &NoiseSpec) -> Result<()> {
    match *n {
        NoiseSpec::Sigma(s) if !(s.is_finite() && s >= 0.0) => Err(CliError::config(format!(
            "noise sigma must be >= 0, got {s}"
        ))),
        NoiseSpec::SnrDb(db) if !db.is_finite() => {
            Err(CliError::config("noise SNR must be finite"))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// CFLD file holding one complex object field.
    pub input: Option<PathBuf>,
    pub zs: Vec<f64>,
    pub noise: NoiseSpec,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            input: None,
            zs: vec![300.0, 375.0],
            noise: NoiseSpec::default(),
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        require(&self.input, "simulate.input")?;
        if self.zs.is_empty() || self.zs.iter().any(|z| !z.is_finite()) {
            return Err(CliError::config(
                "simulate.zs must be a nonempty list of finite distances",
            ));
        }
        validate_noise(&self.noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mhpr,
    Var,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mhpr" => Ok(Method::Mhpr),
            "var" | "variational" => Ok(Method::Var),
            _ => Err(format!("unknown method {s:?} (expected mhpr or var)")),
        }
    }
}

/// Solver parameters shared by `solve` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodConfig {
    pub method: Method,
    /// MHPR iterations.
    pub iters: usize,
    /// Variational Adam steps.
    pub steps: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub loss: LossWeights,
    pub mode: LossMode,
    pub tol: f64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            method: Method::Mhpr,
            iters: 100,
            steps: 2000,
            lr: DEFAULT_LR,
            lr_schedule: LrSchedule::CosineAnnealing,
            loss: LossWeights::default(),
            mode: LossMode::Complex,
            tol: 1e-7,
        }
    }
}

impl MethodConfig {
    pub fn solver(&self, seed: u64) -> holo_core::SolverConfig {
        holo_core::SolverConfig {
            max_iters: self.steps,
            lr: self.lr,
            lr_schedule: self.lr_schedule,
            weights: self.loss,
            mode: self.mode,
            tol: self.tol,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver(0)
            .validate()
            .map_err(|e| CliError::config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    /// Dataset directory written by `gen`.
    pub data: Option<PathBuf>,
    pub solver: MethodConfig,
    /// Skip the comparison against ground truth.
    pub no_eval: bool,
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        require(&self.data, "solve.data")?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCmdConfig {
    pub data: Option<PathBuf>,
    pub net: SpafConfig,
    pub train: TrainConfig,
}

impl TrainCmdConfig {
    pub fn validate(&self) -> Result<()> {
        require(&self.data, "train.data")?;
        self.net.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    pub data: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub no_eval: bool,
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        require(&self.data, "infer.data")?;
        require(&self.weights, "infer.weights")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Directory of `recon_*.cfld` files.
    pub recon: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        require(&self.recon, "eval.recon")?;
        require(&self.data, "eval.data")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Number of hologram planes.
    #[serde(rename = "M")]
    M,
    /// Axial shift of every plane (µm) relative to the assumed distances.
    #[serde(rename = "dz")]
    Dz,
    #[serde(rename = "snr")]
    Snr,
    /// Test wavelength in nm; reconstruction assumes the configured one.
    #[serde(rename = "lambda")]
    Lambda,
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "M" | "m" => Ok(SweepParam::M),
            "dz" => Ok(SweepParam::Dz),
            "snr" => Ok(SweepParam::Snr),
            "lambda" => Ok(SweepParam::Lambda),
            _ => Err(format!(
                "unknown sweep parameter {s:?} (expected M, dz, snr or lambda)"
            )),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::M => "M",
            SweepParam::Dz => "dz",
            SweepParam::Snr => "snr",
            SweepParam::Lambda => "lambda",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Instances per grid point; the same objects are reused at every value.
    pub count: usize,
    pub grid: GridConfig,
    pub object: ObjectConfig,
    /// Assumed distances for the dz, snr and lambda sweeps.
    pub zs: Vec<f64>,
    /// M sweeps use `z_base + k·z_step` for k < M.
    pub z_base: f64,
    pub z_step: f64,
    pub noise: NoiseSpec,
    /// dz sweeps also report the reconstruction refocused by dz.
    pub refocus: bool,
    pub solver: MethodConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            param: SweepParam::M,
            values: Vec::new(),
            count: 20,
            grid: GridConfig::default(),
            object: ObjectConfig::default(),
            zs: vec![300.0, 375.0],
            z_base: 300.0,
            z_step: 15.0,
            noise: NoiseSpec::None,
            refocus: false,
            solver: MethodConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(CliError::config("sweep grid is empty"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::config("sweep values must be finite"));
        }
        if self.count == 0 {
            return Err(CliError::config("sweep.count must be >= 1"));
        }
        if self.param == SweepParam::M && self.values.iter().any(|&m| m < 1.0 || m.fract() != 0.0) {
            return Err(CliError::config("M values must be positive integers"));
        }
        if self.param == SweepParam::Lambda && self.values.iter().any(|&l| l <= 0.0) {
            return Err(CliError::config("wavelengths must be positive"));
        }
        if self.param != SweepParam::M && self.zs.is_empty() {
            return Err(CliError::config("sweep.zs must not be empty"));
        }
        self.grid.build()?;
        validate_noise(&self.noise)?;
        self.solver.validate()
    }
}

/// Whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub gen: GenConfig,
    pub simulate: SimulateConfig,
    pub solve: SolveConfig,
    pub train: TrainCmdConfig,
    pub infer: InferConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

fn require<'a>(v: &'a Option<PathBuf>, name: &str) -> Result<&'a PathBuf> {
    v.as_ref()
        .ok_or_else(|| CliError::config(format!("{name} is required")))
}

/// Parse `"300,375"` into distances.
pub fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad number {t:?}: {e}"))
        })
        .collect()
}

/// Parse sweep values: a comma list whose items may be ranges `a..b` (step 10)
/// or `a..b..step`.
pub fn parse_values(s: &str) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if item.contains("..") {
            let parts: Vec<&str> = item.split("..").collect();
            let num = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad number {t:?}: {e}"))
            };
            let (a, b, step) = match parts.as_slice() {
                [a, b] => (num(a)?, num(b)?, 10.0),
                [a, b, s] => (num(a)?, num(b)?, num(s)?),
                _ => return Err(format!("bad range {item:?}")),
            };
            if step.is_nan() || step <= 0.0 || b < a {
                return Err(format!("bad range {item:?}"));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize;
            out.extend((0..=count).map(|k| a + k as f64 * step));
        } else {
            out.push(
                item.parse::<f64>()
                    .map_err(|e| format!("bad number {item:?}: {e}"))?,
            );
        }
    }
    Ok(out)
}

/// `fixed` (uses the explicit list), `uniform:lo:hi` or `uniform:lo:hi:m`.
pub fn parse_z_mode(s: &str, zs: Option<&[f64]>) -> std::result::Result<ZSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| {
        t.parse::<f64>()
            .map_err(|e| format!("bad number {t:?}: {e}"))
    };
    match parts.as_slice() {
        ["fixed"] => Ok(ZSpec::Fixed {
            zs: zs
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![300.0, 375.0]),
        }),
        ["uniform", lo, hi] => Ok(ZSpec::Uniform {
            lo: num(lo)?,
            hi: num(hi)?,
            m: zs.map_or(2, <[f64]>::len),
        }),
        ["uniform", lo, hi, m] => Ok(ZSpec::Uniform {
            lo: num(lo)?,
            hi: num(hi)?,
            m: m.parse()
                .map_err(|e| format!("bad plane count {m:?}: {e}"))?,
        }),
        _ => Err(format!(
            "bad z mode {s:?} (expected fixed or uniform:lo:hi[:m])"
        )),
    }
}

/// `none`, `snr:<dB>` or `sigma:<value>`.
pub fn parse_noise(s: &str) -> std::result::Result<NoiseSpec, String> {
    let num = |t: &str| {
        t.parse::<f64>()
            .map_err(|e| format!("bad number {t:?}: {e}"))
    };
    match s.split_once(':') {
        None if s == "none" => Ok(NoiseSpec::None),
        Some(("snr", v)) => Ok(NoiseSpec::SnrDb(num(v)?)),
        Some(("sigma", v)) => Ok(NoiseSpec::Sigma(num(v)?)),
        _ => Err(format!(
            "bad noise spec {s:?} (expected none, snr:<dB> or sigma:<value>)"
        )),
    }
}
