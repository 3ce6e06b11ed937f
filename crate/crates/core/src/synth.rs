//! Artificial random images and the synthetic objects built from them.
//!
//! Images are produced by colouring pixels along a path through a random
//! gray-valued landscape: the path is the depth-first traversal of the
//! minimum spanning tree of the 4-neighbour grid, weighted by gray-level
//! differences, and each pixel's value is its normalised position on the path.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::audit;
use crate::error::{HoloError, Result};
use crate::field::{ComplexField, HologramStack};
use crate::grid::OpticalGrid;
use crate::propagation::{band_limit, forward_stack, sigma_for_snr_db, simulate_hologram_stack};

pub const DEFAULT_SMOOTHING_RADIUS: usize = 2;

/// SplitMix64 finaliser used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    /// Amplitude offset added before modulation; must be positive.
    pub delta: f64,
    /// Multiplier applied to the [0, 1] phase image before exponentiation.
    pub phase_scale: f64,
    pub smoothing_radius: usize,
    pub seed: u64,
    /// Strip evanescent components from generated objects.
    #[serde(default)]
    pub band_limit: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 64,
            delta: 0.1,
            phase_scale: PI,
            smoothing_radius: DEFAULT_SMOOTHING_RADIUS,
            seed: 0,
            band_limit: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self, grid: &OpticalGrid) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(HoloError::InvalidArgument(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !self.phase_scale.is_finite() {
            return Err(HoloError::NonFinite("phase_scale"));
        }
        if self.n != grid.n() {
            return Err(HoloError::InvalidArgument(format!(
                "config n = {} but grid n = {}",
                self.n,
                grid.n()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    AmplitudePhase,
    PhaseOnly,
}

impl std::str::FromStr for ObjectKind {
    type Err = HoloError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude-phase" => Ok(Self::AmplitudePhase),
            "phase-only" => Ok(Self::PhaseOnly),
            _ => Err(HoloError::InvalidArgument(format!(
                "unknown object kind {s:?}"
            ))),
        }
    }
}

/// Ground-truth object. Reading [`SyntheticObject::field`] is audited.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticObject {
    amplitude_image: Array2<f64>,
    phase_image: Array2<f64>,
    field: ComplexField,
    kind: ObjectKind,
}

impl SyntheticObject {
    /// Assemble an object from explicit [0, 1] images. For phase-only objects
    /// the amplitude image is ignored and the modulus is exactly one.
    pub fn from_images(
        amplitude_image: Array2<f64>,
        phase_image: Array2<f64>,
        cfg: &SynthConfig,
        grid: OpticalGrid,
        kind: ObjectKind,
    ) -> Result<Self> {
        cfg.validate(&grid)?;
        let amplitude = match kind {
            ObjectKind::AmplitudePhase => amplitude_image.mapv(|a| a + cfg.delta),
            ObjectKind::PhaseOnly => Array2::from_elem(phase_image.dim(), 1.0),
        };
        let phase = phase_image.mapv(|p| cfg.phase_scale * p);
        let mut field = ComplexField::from_amp_phase(&amplitude, &phase, grid)?;
        if cfg.band_limit {
            field = band_limit(&field);
        }
        Ok(Self {
            amplitude_image,
            phase_image,
            field,
            kind,
        })
    }

    pub fn amplitude_image(&self) -> &Array2<f64> {
        &self.amplitude_image
    }

    pub fn phase_image(&self) -> &Array2<f64> {
        &self.phase_image
    }

    pub fn kind(&self) -> ObjectKind {
        self.kind
    }

    pub fn field(&self) -> &ComplexField {
        audit::record_object_read();
        &self.field
    }

    pub fn into_field(self) -> ComplexField {
        audit::record_object_read();
        self.field
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEdge {
    weight: f64,
    node: usize,
    parent: usize,
}

impl PartialEq for HeapEdge {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEdge {}

impl PartialOrd for HeapEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEdge {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.parent.cmp(&self.parent))
    }
}

fn box_filter(img: &Array2<f64>, radius: usize) -> Array2<f64> {
    if radius == 0 {
        return img.clone();
    }
    let (rows, cols) = img.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let r0 = r.saturating_sub(radius);
        let r1 = (r + radius).min(rows - 1);
        let c0 = c.saturating_sub(radius);
        let c1 = (c + radius).min(cols - 1);
        let mut sum = 0.0;
        for rr in r0..=r1 {
            for cc in c0..=c1 {
                sum += img[[rr, cc]];
            }
        }
        sum / ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64
    })
}

/// Path-coloured random image in [0, 1] with exact minimum 0 and maximum 1.
pub fn random_artificial_image(
    n: usize,
    smoothing_radius: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    if n < 8 {
        return Err(HoloError::InvalidArgument(format!(
            "image side must be >= 8, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array2::from_shape_simple_fn((n, n), || rng.gen::<f64>());
    let gray = box_filter(&noise, smoothing_radius);
    let gray = gray.as_slice().expect("standard layout");

    let total = n * n;
    let root = rng.gen_range(0..total);
    let mut in_tree = vec![false; total];
    let mut children: Vec<Vec<(f64, usize)>> = vec![Vec::new(); total];
    let mut heap = BinaryHeap::new();
    heap.push(HeapEdge {
        weight: 0.0,
        node: root,
        parent: usize::MAX,
    });
    while let Some(HeapEdge {
        weight,
        node,
        parent,
    }) = heap.pop()
    {
        if in_tree[node] {
            continue;
        }
        in_tree[node] = true;
        if parent != usize::MAX {
            children[parent].push((weight, node));
        }
        let (r, c) = (node / n, node % n);
        let mut visit = |nb: usize| {
            if !in_tree[nb] {
                heap.push(HeapEdge {
                    weight: (gray[node] - gray[nb]).abs(),
                    node: nb,
                    parent: node,
                });
            }
        };
        if r > 0 {
            visit(node - n);
        }
        if c > 0 {
            visit(node - 1);
        }
        if c + 1 < n {
            visit(node + 1);
        }
        if r + 1 < n {
            visit(node + n);
        }
    }

    // depth-first, cheapest edge first
    let mut rank = vec![0usize; total];
    let mut stack = vec![root];
    let mut next = 0usize;
    while let Some(v) = stack.pop() {
        rank[v] = next;
        next += 1;
        let kids = &mut children[v];
        kids.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        stack.extend(kids.iter().rev().map(|&(_, k)| k));
    }
    debug_assert_eq!(next, total);
    let denom = (total - 1) as f64;
    Ok(
        Array2::from_shape_vec((n, n), rank.into_iter().map(|k| k as f64 / denom).collect())
            .expect("n×n ranks"),
    )
}

/// Draw a synthetic object; amplitude and phase come from independent sub-seeds.
pub fn make_object(
    cfg: &SynthConfig,
    grid: OpticalGrid,
    kind: ObjectKind,
    seed: u64,
) -> Result<SyntheticObject> {
    cfg.validate(&grid)?;
    let phase = random_artificial_image(cfg.n, cfg.smoothing_radius, derive_seed(seed, 2))?;
    let amplitude = match kind {
        ObjectKind::AmplitudePhase => {
            random_artificial_image(cfg.n, cfg.smoothing_radius, derive_seed(seed, 1))?
        }
        ObjectKind::PhaseOnly => Array2::zeros((cfg.n, cfg.n)),
    };
    SyntheticObject::from_images(amplitude, phase, cfg, grid, kind)
}

/// How axial distances are assigned to each dataset entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ZSpec {
    Fixed {
        zs: Vec<f64>,
    },
    /// `m` distances drawn uniformly in `[lo, hi]` per entry, sorted ascending.
    Uniform {
        lo: f64,
        hi: f64,
        m: usize,
    },
}

impl ZSpec {
    pub fn standard_pair() -> Self {
        ZSpec::Fixed {
            zs: vec![300.0, 375.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ZSpec::Fixed { zs } if zs.is_empty() => {
                Err(HoloError::InvalidArgument("empty z list".into()))
            }
            ZSpec::Fixed { zs } if zs.iter().any(|z| !z.is_finite()) => {
                Err(HoloError::NonFinite("z list"))
            }
            ZSpec::Uniform { lo, hi, m }
                if !lo.is_finite() || !hi.is_finite() || lo > hi || *m == 0 =>
            {
                Err(HoloError::InvalidArgument(format!(
                    "bad uniform z range [{lo}, {hi}] x {m}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, seed: u64) -> Vec<f64> {
        match self {
            ZSpec::Fixed { zs } => zs.clone(),
            ZSpec::Uniform { lo, hi, m } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut zs: Vec<f64> = (0..*m)
                    .map(|_| {
                        if lo == hi {
                            *lo
                        } else {
                            rng.gen_range(*lo..=*hi)
                        }
                    })
                    .collect();
                zs.sort_by(f64::total_cmp);
                zs
            }
        }
    }
}

/// Measurement noise model applied when simulating stacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "model", content = "value")]
pub enum NoiseSpec {
    None,
    Sigma(f64),
    /// SNR in dB relative to the mean noiseless hologram amplitude.
    SnrDb(f64),
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::SnrDb(40.0)
    }
}

impl NoiseSpec {
    pub fn sigma_for(&self, noiseless: &HologramStack) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Sigma(s) => s,
            NoiseSpec::SnrDb(db) => {
                let total: f64 = noiseless.planes().iter().map(|p| p.amplitude().sum()).sum();
                let mean = total / (noiseless.m() * noiseless.grid().len()) as f64;
                sigma_for_snr_db(mean, db)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub object: SyntheticObject,
    pub stack: HologramStack,
}

/// Simulate one object's stack under a noise model.
pub fn simulate_entry(
    object: &SyntheticObject,
    zs: &[f64],
    noise: NoiseSpec,
    seed: u64,
) -> Result<HologramStack> {
    let field = &object.field;
    match noise {
        NoiseSpec::None => forward_stack(field, zs),
        _ => {
            let clean = forward_stack(field, zs)?;
            simulate_hologram_stack(field, zs, noise.sigma_for(&clean), seed)
        }
    }
}

/// Deterministic dataset: entry `i` depends only on `(cfg, seed, i)`, so the
/// result is identical however the work is scheduled.
pub fn make_dataset(
    cfg: &SynthConfig,
    grid: OpticalGrid,
    zspec: &ZSpec,
    count: usize,
    noise: NoiseSpec,
    kind: ObjectKind,
    seed: u64,
) -> Result<Vec<DatasetEntry>> {
    if count == 0 {
        return Err(HoloError::InvalidArgument(
            "dataset count must be >= 1".into(),
        ));
    }
    cfg.validate(&grid)?;
    zspec.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let entry_seed = derive_seed(seed, i as u64);
            let object = make_object(cfg, grid, kind, derive_seed(entry_seed, 10))?;
            let zs = zspec.draw(derive_seed(entry_seed, 11));
            let stack = simulate_entry(&object, &zs, noise, derive_seed(entry_seed, 12))?;
            Ok(DatasetEntry { object, stack })
        })
        .collect()
}

/// Pearson correlation coefficient of two equally-sized images.
pub fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Unit-modulus helper used by phase-only objects: `exp(iπ·φ)`.
pub fn phase_only_field(phase_image: &Array2<f64>, grid: OpticalGrid) -> Result<ComplexField> {
    let values = phase_image.mapv(|p| Complex64::from_polar(1.0, PI * p));
    ComplexField::new(grid, values)
}
