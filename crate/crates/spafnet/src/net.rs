//! Network weights and the forward/backward passes.
//!
//! ```text
//! input (M, n, n) ─ 1×1 head ─┬─ block₁ … block_B ─(+)─ 1×1 tail ─ (re, im) ─ normalize
//!                             └──────────────────────┘
//! block:   y ← y + module(y)   (recursion times, shared parameters)
//!          out = PReLU(y) + x
//! module:  conv3×3(x) + Re IFFT( embed( W ⊙ crop( FFT(Σ_i x_i) ) ) )
//! ```

use holo_core::loss::{loss_and_gradient, Estimate, Gradient, LossReport, LossWeights};
use holo_core::{ComplexField, HologramStack, DEFAULT_NORM_EPS};
use ndarray::{Array1, Array2, Array3, Array4, ArrayD, ArrayViewD, ArrayViewMutD, Axis, IxDyn};
use num_complex::{Complex, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SpafConfig;
use crate::error::{Result, SpafError};
use crate::real::Real;
use crate::tape::{Tape, Value, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights<T> {
    /// (c, c, 3, 3)
    pub conv: Array4<T>,
    /// Real Fourier weights (c, 2K+1, 2K+1).
    pub fourier: Array3<T>,
    /// PReLU slope per channel.
    pub prelu: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpafWeights<T> {
    /// (c, M)
    pub head_w: Array2<T>,
    pub head_b: Array1<T>,
    pub blocks: Vec<BlockWeights<T>>,
    /// (2, c)
    pub tail_w: Array2<T>,
    pub tail_b: Array1<T>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Parameter tensors in declaration order.
pub fn parameter_shapes(cfg: &SpafConfig) -> Vec<TensorShape> {
    let c = cfg.channels;
    let mut out = vec![
        TensorShape {
            name: "head.w".into(),
            shape: vec![c, cfg.m_inputs],
        },
        TensorShape {
            name: "head.b".into(),
            shape: vec![c],
        },
    ];
    for b in 0..cfg.blocks {
        let w = cfg.window(b);
        out.push(TensorShape {
            name: format!("block{b}.conv"),
            shape: vec![c, c, 3, 3],
        });
        out.push(TensorShape {
            name: format!("block{b}.fourier"),
            shape: vec![c, w, w],
        });
        out.push(TensorShape {
            name: format!("block{b}.prelu"),
            shape: vec![c],
        });
    }
    out.push(TensorShape {
        name: "tail.w".into(),
        shape: vec![2, c],
    });
    out.push(TensorShape {
        name: "tail.b".into(),
        shape: vec![2],
    });
    out
}

const PRELU_INIT: f64 = 0.25;

impl<T: Real> SpafWeights<T> {
    /// Random initialization. The tail bias starts at (1, 0) so the first
    /// outputs sit near a flat unit field with a well-defined mean.
    pub fn init(cfg: &SpafConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |std: f64| -> T {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::of(std * z)
        };
        let c = cfg.channels;
        let cf = c as f64;
        let head_std = (1.0 / cfg.m_inputs as f64).sqrt();
        let head_w = Array2::from_shape_simple_fn((c, cfg.m_inputs), || normal(head_std));
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for b in 0..cfg.blocks {
            let w = cfg.window(b);
            let conv_std = 0.5 * (1.0 / (9.0 * cf)).sqrt();
            let conv = Array4::from_shape_simple_fn((c, c, 3, 3), || normal(conv_std));
            let fourier = Array3::from_shape_simple_fn((c, w, w), || normal(0.5 / cf));
            blocks.push(BlockWeights {
                conv,
                fourier,
                prelu: Array1::from_elem(c, T::of(PRELU_INIT)),
            });
        }
        let tail_w = Array2::from_shape_simple_fn((2, c), || normal(0.1 / cf.sqrt()));
        let tail_b = Array1::from_vec(vec![T::one(), T::zero()]);
        Ok(Self {
            head_w,
            head_b: Array1::zeros(c),
            blocks,
            tail_w,
            tail_b,
        })
    }

    pub fn zeros(cfg: &SpafConfig) -> Self {
        let c = cfg.channels;
        Self {
            head_w: Array2::zeros((c, cfg.m_inputs)),
            head_b: Array1::zeros(c),
            blocks: (0..cfg.blocks)
                .map(|b| {
                    let w = cfg.window(b);
                    BlockWeights {
                        conv: Array4::zeros((c, c, 3, 3)),
                        fourier: Array3::zeros((c, w, w)),
                        prelu: Array1::zeros(c),
                    }
                })
                .collect(),
            tail_w: Array2::zeros((2, c)),
            tail_b: Array1::zeros(2),
        }
    }

    pub fn tensors(&self) -> Vec<ArrayViewD<'_, T>> {
        let mut v = vec![self.head_w.view().into_dyn(), self.head_b.view().into_dyn()];
        for b in &self.blocks {
            v.push(b.conv.view().into_dyn());
            v.push(b.fourier.view().into_dyn());
            v.push(b.prelu.view().into_dyn());
        }
        v.push(self.tail_w.view().into_dyn());
        v.push(self.tail_b.view().into_dyn());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut v = vec![
            self.head_w.view_mut().into_dyn(),
            self.head_b.view_mut().into_dyn(),
        ];
        for b in &mut self.blocks {
            v.push(b.conv.view_mut().into_dyn());
            v.push(b.fourier.view_mut().into_dyn());
            v.push(b.prelu.view_mut().into_dyn());
        }
        v.push(self.tail_w.view_mut().into_dyn());
        v.push(self.tail_b.view_mut().into_dyn());
        v
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Flattened parameters in declaration order.
    pub fn to_flat(&self) -> Vec<T> {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect()
    }

    pub fn from_flat(cfg: &SpafConfig, flat: &[T]) -> Result<Self> {
        let mut w = Self::zeros(cfg);
        if flat.len() != w.num_params() {
            return Err(SpafError::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                w.num_params()
            )));
        }
        let mut it = flat.iter();
        for mut t in w.tensors_mut() {
            for v in t.iter_mut() {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(w)
    }

    /// Shapes agree with `cfg`.
    pub fn check(&self, cfg: &SpafConfig) -> Result<()> {
        let expected = parameter_shapes(cfg);
        let actual = self.tensors();
        if expected.len() != actual.len()
            || expected
                .iter()
                .zip(&actual)
                .any(|(e, a)| e.shape != a.shape())
        {
            return Err(SpafError::Shape(
                "weights do not match the network configuration".into(),
            ));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> SpafWeights<U> {
        let c = |a: &Array1<T>| a.mapv(|v| U::of(v.f64()));
        SpafWeights {
            head_w: self.head_w.mapv(|v| U::of(v.f64())),
            head_b: c(&self.head_b),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockWeights {
                    conv: b.conv.mapv(|v| U::of(v.f64())),
                    fourier: b.fourier.mapv(|v| U::of(v.f64())),
                    prelu: c(&b.prelu),
                })
                .collect(),
            tail_w: self.tail_w.mapv(|v| U::of(v.f64())),
            tail_b: c(&self.tail_b),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Tape handles of one block's parameters.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub conv: Var,
    pub fourier: Var,
    pub prelu: Var,
}

#[derive(Debug, Clone)]
pub struct ParamVars {
    pub head_w: Var,
    pub head_b: Var,
    pub blocks: Vec<BlockVars>,
    pub tail_w: Var,
    pub tail_b: Var,
}

impl ParamVars {
    fn in_order(&self) -> Vec<Var> {
        let mut v = vec![self.head_w, self.head_b];
        for b in &self.blocks {
            v.extend([b.conv, b.fourier, b.prelu]);
        }
        v.extend([self.tail_w, self.tail_b]);
        v
    }
}

/// Record every parameter as a leaf on the tape.
pub fn register<T: Real>(tape: &mut Tape<T>, w: &SpafWeights<T>) -> ParamVars {
    let mut leaf = |a: ArrayViewD<T>| tape.leaf(Value::Real(a.to_owned()));
    let head_w = leaf(w.head_w.view().into_dyn());
    let head_b = leaf(w.head_b.view().into_dyn());
    let blocks = w
        .blocks
        .iter()
        .map(|b| BlockVars {
            conv: leaf(b.conv.view().into_dyn()),
            fourier: leaf(b.fourier.view().into_dyn()),
            prelu: leaf(b.prelu.view().into_dyn()),
        })
        .collect();
    let tail_w = leaf(w.tail_w.view().into_dyn());
    let tail_b = leaf(w.tail_b.view().into_dyn());
    ParamVars {
        head_w,
        head_b,
        blocks,
        tail_w,
        tail_b,
    }
}

/// Parameter gradients after a backward pass, shaped like the weights.
pub fn collect_grads<T: Real>(
    tape: &Tape<T>,
    vars: &ParamVars,
    cfg: &SpafConfig,
) -> SpafWeights<T> {
    let mut g = SpafWeights::zeros(cfg);
    for (mut dst, v) in g.tensors_mut().into_iter().zip(vars.in_order()) {
        if let Some(src) = tape.grad(v) {
            dst.assign(src.as_real());
        }
    }
    g
}

/// One SPAF module: spatial 3×3 convolution plus the windowed Fourier branch.
pub fn spaf_module_forward<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    conv: Var,
    fourier: Var,
    half: usize,
) -> Result<Var> {
    let spatial = tape.conv3x3(x, conv)?;
    let sum = tape.channel_sum(x)?;
    let spectrum = tape.fft2(sum)?;
    let window = tape.window_crop(spectrum, half)?;
    let scaled = tape.spectral_scale(window, fourier)?;
    let embedded = tape.window_embed(scaled)?;
    let branch = tape.ifft2_real(embedded)?;
    tape.add(spatial, branch)
}

/// Recursive shared-parameter modules, PReLU, and the block residual.
pub fn spaf_block_forward<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    p: BlockVars,
    half: usize,
    recursion: usize,
) -> Result<Var> {
    let mut y = x;
    for _ in 0..recursion {
        let m = spaf_module_forward(tape, y, p.conv, p.fourier, half)?;
        y = tape.add(y, m)?;
    }
    let z = tape.prelu(y, p.prelu)?;
    tape.add(z, x)
}

/// Full network on a recorded input; returns the normalized complex output.
pub fn network_on_tape<T: Real>(
    tape: &mut Tape<T>,
    input: Var,
    p: &ParamVars,
    cfg: &SpafConfig,
) -> Result<Var> {
    let head = tape.conv1x1(input, p.head_w, p.head_b)?;
    let mut x = head;
    for (b, bv) in p.blocks.iter().enumerate() {
        x = spaf_block_forward(tape, x, *bv, cfg.half_windows[b], cfg.recursion)?;
    }
    let r = tape.add(x, head)?;
    let tail = tape.conv1x1(r, p.tail_w, p.tail_b)?;
    let z = tape.to_complex(tail)?;
    tape.mean_norm(z, cfg.output_norm, DEFAULT_NORM_EPS)
}

/// Holograms as an (M, n, n) tensor, planes in ascending z.
pub fn stack_input<T: Real>(stack: &HologramStack, cfg: &SpafConfig) -> Result<ArrayD<T>> {
    let n = stack.grid().n();
    if stack.m() != cfg.m_inputs || n != cfg.n {
        return Err(SpafError::Shape(format!(
            "network expects {} planes of {}×{}, got {} planes of {n}×{n}",
            cfg.m_inputs,
            cfg.n,
            cfg.n,
            stack.m()
        )));
    }
    let sorted = stack.sorted_by_z();
    let mut x = ArrayD::<T>::zeros(IxDyn(&[stack.m(), n, n]));
    for (mut dst, plane) in x.axis_iter_mut(Axis(0)).zip(sorted.planes()) {
        dst.assign(&plane.amplitude().mapv(T::of).into_dyn());
    }
    Ok(x)
}

/// A recorded forward pass ready for [`Tape::backward`].
pub struct Recorded<T: Real> {
    pub tape: Tape<T>,
    pub params: ParamVars,
    pub output: Var,
}

impl<T: Real> Recorded<T> {
    pub fn output_field(&self, stack: &HologramStack) -> Result<ComplexField> {
        let out = self
            .tape
            .value(self.output)
            .expect("output recorded")
            .as_complex();
        if !out.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(SpafError::NonFinite("network output"));
        }
        let n = stack.grid().n();
        let values = out
            .index_axis(Axis(0), 0)
            .mapv(|z| Complex64::new(z.re.f64(), z.im.f64()))
            .into_shape_with_order((n, n))
            .expect("n×n output");
        Ok(ComplexField::new(*stack.grid(), values)?)
    }
}

pub fn record<T: Real>(
    stack: &HologramStack,
    weights: &SpafWeights<T>,
    cfg: &SpafConfig,
) -> Result<Recorded<T>> {
    cfg.validate()?;
    weights.check(cfg)?;
    let input = stack_input::<T>(stack, cfg)?;
    let mut tape = Tape::new(cfg.n);
    let params = register(&mut tape, weights);
    let x = tape.leaf(Value::Real(input));
    let output = network_on_tape(&mut tape, x, &params, cfg)?;
    Ok(Recorded {
        tape,
        params,
        output,
    })
}

/// Reconstruct the object field from measured holograms.
pub fn network_forward<T: Real>(
    stack: &HologramStack,
    weights: &SpafWeights<T>,
    cfg: &SpafConfig,
) -> Result<ComplexField> {
    record(stack, weights, cfg)?.output_field(stack)
}

/// Physics-consistency loss of the network output and its parameter gradients.
pub fn loss_and_gradients<T: Real>(
    stack: &HologramStack,
    weights: &SpafWeights<T>,
    cfg: &SpafConfig,
    loss_weights: &LossWeights,
) -> Result<(LossReport, SpafWeights<T>)> {
    let mut rec = record(stack, weights, cfg)?;
    let field = rec.output_field(stack)?;
    let (report, grad) = loss_and_gradient(&Estimate::Field(field), stack, loss_weights)?;
    if !report.is_finite() {
        return Err(SpafError::NonFinite("physics loss"));
    }
    let Gradient::Field(g) = grad else {
        unreachable!("complex estimates give field gradients")
    };
    let seed = g
        .mapv(|z| Complex::new(T::of(z.re), T::of(z.im)))
        .insert_axis(Axis(0))
        .into_dyn();
    rec.tape.backward(rec.output, Value::Complex(seed))?;
    let grads = collect_grads(&rec.tape, &rec.params, cfg);
    if !grads.is_finite() {
        return Err(SpafError::NonFinite("parameter gradients"));
    }
    Ok((report, grads))
}

/// Physics-consistency loss of the network output without gradients.
pub fn loss_only<T: Real>(
    stack: &HologramStack,
    weights: &SpafWeights<T>,
    cfg: &SpafConfig,
    loss_weights: &LossWeights,
) -> Result<LossReport> {
    let field = network_forward(stack, weights, cfg)?;
    let report = holo_core::loss::total_loss(&Estimate::Field(field), stack, loss_weights)?;
    if !report.is_finite() {
        return Err(SpafError::NonFinite("physics loss"));
    }
    Ok(report)
}
