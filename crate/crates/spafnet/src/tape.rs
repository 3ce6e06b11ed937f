//! Reverse-mode tape over real and complex tensors.
//!
//! Complex gradients follow the convention `G = ∂L/∂Re + i·∂L/∂Im`, so that
//! `dL = Re Σ conj(G)·dz`. All transforms are unitary.

use holo_core::fft::Fft2;
use ndarray::{s, Array2, ArrayD, ArrayView2, ArrayView3, Axis, Ix3, IxDyn, Zip};
use num_complex::Complex;
use std::sync::Arc;

use crate::config::OutputNorm;
use crate::error::{Result, SpafError};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum Value<T: Real> {
    Real(ArrayD<T>),
    Complex(ArrayD<Complex<T>>),
}

impl<T: Real> Value<T> {
    pub fn shape(&self) -> &[usize] {
        match self {
            Value::Real(a) => a.shape(),
            Value::Complex(a) => a.shape(),
        }
    }

    pub fn as_real(&self) -> &ArrayD<T> {
        match self {
            Value::Real(a) => a,
            Value::Complex(_) => panic!("expected a real tensor"),
        }
    }

    pub fn as_complex(&self) -> &ArrayD<Complex<T>> {
        match self {
            Value::Complex(a) => a,
            Value::Real(_) => panic!("expected a complex tensor"),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Real(a) => a.iter().all(|v| v.is_finite()),
            Value::Complex(a) => a.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Value::Real(a) => Value::Real(ArrayD::zeros(a.raw_dim())),
            Value::Complex(a) => Value::Complex(ArrayD::zeros(a.raw_dim())),
        }
    }

    fn accumulate(&mut self, other: Value<T>) {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => *a += &b,
            (Value::Complex(a), Value::Complex(b)) => *a += &b,
            _ => panic!("gradient kind does not match its tensor"),
        }
    }
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T: Real> {
    Leaf,
    Conv1x1 {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv3x3 {
        x: Var,
        k: Var,
        cols: Array2<T>,
    },
    Add(Var, Var),
    Prelu {
        x: Var,
        a: Var,
    },
    ChannelSum(Var),
    Fft2(Var),
    WindowCrop {
        x: Var,
        half: usize,
    },
    SpectralScale {
        s: Var,
        w: Var,
    },
    WindowEmbed {
        x: Var,
        half: usize,
    },
    Ifft2Real(Var),
    ToComplex(Var),
    MeanNorm {
        x: Var,
        mode: OutputNorm,
        mean: Complex<T>,
    },
}

#[derive(Debug)]
struct Node<T: Real> {
    value: Option<Value<T>>,
    grad: Option<Value<T>>,
    op: Op<T>,
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    fft: Arc<Fft2<T>>,
    n: usize,
    consumed: bool,
}

fn shape_err(msg: String) -> SpafError {
    SpafError::Shape(msg)
}

/// Centered-window index: window offset `a` ∈ [0, 2K] ↔ frequency `a − K`.
fn wrap(a: usize, half: usize, n: usize) -> usize {
    (a + n - half) % n
}

fn im2col<T: Real>(x: ArrayView3<T>) -> Array2<T> {
    let (c, h, w) = x.dim();
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let mut cols = Array2::<T>::zeros((c * 9, h * w));
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let mut row = cols.row_mut(ci * 9 + ky * 3 + kx);
                let dst = row.as_slice_mut().expect("row of a standard array");
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let srow = &src[(ci * h + sy as usize) * w..][..w];
                    let drow = &mut dst[y * w..][..w];
                    match kx {
                        0 => drow[1..].copy_from_slice(&srow[..w - 1]),
                        1 => drow.copy_from_slice(srow),
                        _ => drow[..w - 1].copy_from_slice(&srow[1..]),
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: ArrayView2<T>, c: usize, h: usize, w: usize) -> ArrayD<T> {
    let mut out = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = cols.row(ci * 9 + ky * 3 + kx);
                let src = row.as_slice().expect("row of a standard array");
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let orow = &mut out[(ci * h + sy as usize) * w..][..w];
                    let srow = &src[y * w..][..w];
                    match kx {
                        0 => orow[..w - 1]
                            .iter_mut()
                            .zip(&srow[1..])
                            .for_each(|(o, &g)| *o += g),
                        1 => orow.iter_mut().zip(srow).for_each(|(o, &g)| *o += g),
                        _ => orow[1..]
                            .iter_mut()
                            .zip(&srow[..w - 1])
                            .for_each(|(o, &g)| *o += g),
                    }
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[c, h, w]), out).expect("c·h·w elements")
}

impl<T: Real> Tape<T> {
    /// Empty tape for n×n feature maps.
    pub fn new(n: usize) -> Self {
        Self::with_fft(Arc::new(Fft2::new(n)))
    }

    pub fn with_fft(fft: Arc<Fft2<T>>) -> Self {
        let n = fft.n();
        Self {
            nodes: Vec::new(),
            fft,
            n,
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a tensor. Intermediate values are released by
    /// [`Tape::backward`]; leaves keep theirs.
    pub fn value(&self, v: Var) -> Option<&Value<T>> {
        self.nodes.get(v.0).and_then(|n| n.value.as_ref())
    }

    /// Gradient of a leaf after [`Tape::backward`]; leaves the loss does not
    /// depend on get zeros.
    pub fn grad(&self, v: Var) -> Option<&Value<T>> {
        self.nodes.get(v.0).and_then(|n| n.grad.as_ref())
    }

    fn val(&self, v: Var) -> &Value<T> {
        self.nodes[v.0].value.as_ref().expect("value released")
    }

    fn real3(&self, v: Var) -> Result<ArrayView3<'_, T>> {
        match self.val(v) {
            Value::Real(a) => a
                .view()
                .into_dimensionality::<Ix3>()
                .map_err(|_| shape_err(format!("expected (c, h, w), got {:?}", a.shape()))),
            Value::Complex(_) => Err(shape_err("expected a real tensor".into())),
        }
    }

    fn complex3(&self, v: Var) -> Result<ArrayView3<'_, Complex<T>>> {
        match self.val(v) {
            Value::Complex(a) => a
                .view()
                .into_dimensionality::<Ix3>()
                .map_err(|_| shape_err(format!("expected (c, h, w), got {:?}", a.shape()))),
            Value::Real(_) => Err(shape_err("expected a complex tensor".into())),
        }
    }

    fn push(&mut self, value: Value<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Value<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    fn check_map(&self, x: ArrayView3<T>) -> Result<()> {
        let (_, h, w) = x.dim();
        if h != self.n || w != self.n {
            return Err(shape_err(format!(
                "feature map {h}×{w} on a {0}×{0} tape",
                self.n
            )));
        }
        Ok(())
    }

    /// Pointwise convolution with bias: `y_j = Σ_i w[j,i]·x_i + b_j`.
    pub fn conv1x1(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.real3(x)?;
        self.check_map(xv)?;
        let (c, h, wd) = xv.dim();
        let wv = self
            .val(w)
            .as_real()
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|_| shape_err("1×1 kernel must be (c_out, c_in)".into()))?;
        let bv = self.val(b).as_real();
        let (cout, cin) = wv.dim();
        if cin != c || bv.shape() != [cout] {
            return Err(shape_err(format!(
                "1×1 conv ({cout}, {cin}) with bias {:?} on {c} channels",
                bv.shape()
            )));
        }
        let xm = xv
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((c, h * wd))
            .expect("reshape");
        let mut y = wv.dot(&xm);
        for (mut row, &bj) in y.axis_iter_mut(Axis(0)).zip(bv.iter()) {
            row.mapv_inplace(|v| v + bj);
        }
        let y = y
            .into_shape_with_order(IxDyn(&[cout, h, wd]))
            .expect("reshape");
        Ok(self.push(Value::Real(y), Op::Conv1x1 { x, w, b }))
    }

    /// Same-padded 3×3 convolution without bias; kernel shape (c_out, c_in, 3, 3).
    pub fn conv3x3(&mut self, x: Var, k: Var) -> Result<Var> {
        let xv = self.real3(x)?;
        self.check_map(xv)?;
        let (c, h, w) = xv.dim();
        let ks = self.val(k).as_real().shape().to_vec();
        if ks.len() != 4 || ks[1] != c || ks[2] != 3 || ks[3] != 3 {
            return Err(shape_err(format!("3×3 kernel {ks:?} on {c} channels")));
        }
        let cols = im2col(xv);
        let km = self
            .val(k)
            .as_real()
            .view()
            .into_shape_with_order((ks[0], c * 9))
            .expect("standard kernel");
        let y = km
            .dot(&cols)
            .into_shape_with_order(IxDyn(&[ks[0], h, w]))
            .expect("reshape");
        Ok(self.push(Value::Real(y), Op::Conv3x3 { x, k, cols }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = match (self.val(a), self.val(b)) {
            (Value::Real(x), Value::Real(y)) if x.shape() == y.shape() => Value::Real(x + y),
            (Value::Complex(x), Value::Complex(y)) if x.shape() == y.shape() => {
                Value::Complex(x + y)
            }
            (x, y) => {
                return Err(shape_err(format!(
                    "cannot add {:?} and {:?}",
                    x.shape(),
                    y.shape()
                )))
            }
        };
        Ok(self.push(y, Op::Add(a, b)))
    }

    /// Per-channel PReLU with slopes `a` of shape (c,).
    pub fn prelu(&mut self, x: Var, a: Var) -> Result<Var> {
        let xv = self.real3(x)?;
        let av = self.val(a).as_real();
        if av.shape() != [xv.dim().0] {
            return Err(shape_err(format!(
                "PReLU slopes {:?} for {} channels",
                av.shape(),
                xv.dim().0
            )));
        }
        let mut y = xv.to_owned();
        for (mut ch, &s) in y.axis_iter_mut(Axis(0)).zip(av.iter()) {
            ch.mapv_inplace(|v| if v > T::zero() { v } else { s * v });
        }
        Ok(self.push(Value::Real(y.into_dyn()), Op::Prelu { x, a }))
    }

    /// Sum over channels, keeping a leading axis of length 1.
    pub fn channel_sum(&mut self, x: Var) -> Result<Var> {
        let xv = self.real3(x)?;
        let y = xv.sum_axis(Axis(0)).insert_axis(Axis(0)).into_dyn();
        Ok(self.push(Value::Real(y), Op::ChannelSum(x)))
    }

    /// Per-channel unitary 2-D FFT of a real tensor.
    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let xv = self.real3(x)?;
        self.check_map(xv)?;
        let mut y = xv.mapv(|v| Complex::new(v, T::zero())).into_dyn();
        let nn = self.n * self.n;
        for chunk in y.as_slice_mut().expect("fresh array").chunks_mut(nn) {
            self.fft.forward_slice(chunk);
        }
        Ok(self.push(Value::Complex(y), Op::Fft2(x)))
    }

    /// Crop the (2K+1)² spectrum window centered on DC.
    pub fn window_crop(&mut self, x: Var, half: usize) -> Result<Var> {
        let xv = self.complex3(x)?;
        let (c, n, _) = xv.dim();
        if 2 * half + 1 > n {
            return Err(shape_err(format!("half window {half} exceeds grid {n}")));
        }
        let w = 2 * half + 1;
        let y = ndarray::Array3::from_shape_fn((c, w, w), |(ch, a, b)| {
            xv[[ch, wrap(a, half, n), wrap(b, half, n)]]
        });
        Ok(self.push(Value::Complex(y.into_dyn()), Op::WindowCrop { x, half }))
    }

    /// `F′_j = W_j ⊙ S` for a single-channel spectrum S and real weights W (c, w, w).
    pub fn spectral_scale(&mut self, s: Var, w: Var) -> Result<Var> {
        let sv = self.complex3(s)?;
        let wv = self.real3(w)?;
        if sv.dim().0 != 1 || sv.dim().1 != wv.dim().1 || sv.dim().2 != wv.dim().2 {
            return Err(shape_err(format!(
                "spectrum {:?} against weights {:?}",
                sv.dim(),
                wv.dim()
            )));
        }
        let s0 = sv.index_axis(Axis(0), 0);
        let mut y = wv.mapv(|v| Complex::new(v, T::zero()));
        for mut ch in y.axis_iter_mut(Axis(0)) {
            ch *= &s0;
        }
        Ok(self.push(Value::Complex(y.into_dyn()), Op::SpectralScale { s, w }))
    }

    /// Place a (2K+1)² window back into an n×n spectrum, zero elsewhere.
    pub fn window_embed(&mut self, x: Var) -> Result<Var> {
        let xv = self.complex3(x)?;
        let (c, w, _) = xv.dim();
        let n = self.n;
        if w % 2 == 0 || w > n {
            return Err(shape_err(format!("window {w} cannot embed into {n}")));
        }
        let half = w / 2;
        let mut y = ndarray::Array3::<Complex<T>>::zeros((c, n, n));
        for ch in 0..c {
            for a in 0..w {
                for b in 0..w {
                    y[[ch, wrap(a, half, n), wrap(b, half, n)]] = xv[[ch, a, b]];
                }
            }
        }
        Ok(self.push(Value::Complex(y.into_dyn()), Op::WindowEmbed { x, half }))
    }

    /// Real part of the per-channel unitary inverse FFT.
    pub fn ifft2_real(&mut self, x: Var) -> Result<Var> {
        let xv = self.complex3(x)?;
        let (c, h, w) = xv.dim();
        if h != self.n || w != self.n {
            return Err(shape_err(format!(
                "spectrum {h}×{w} on a {0}×{0} tape",
                self.n
            )));
        }
        let mut z = xv.as_standard_layout().into_owned();
        let nn = self.n * self.n;
        for chunk in z.as_slice_mut().expect("standard layout").chunks_mut(nn) {
            self.fft.inverse_slice(chunk);
        }
        let y = z
            .mapv(|v| v.re)
            .into_shape_with_order(IxDyn(&[c, h, w]))
            .expect("reshape");
        Ok(self.push(Value::Real(y), Op::Ifft2Real(x)))
    }

    /// Two real channels (re, im) into one complex channel.
    pub fn to_complex(&mut self, x: Var) -> Result<Var> {
        let xv = self.real3(x)?;
        if xv.dim().0 != 2 {
            return Err(shape_err(format!(
                "expected 2 channels, got {}",
                xv.dim().0
            )));
        }
        let y = Zip::from(xv.index_axis(Axis(0), 0))
            .and(xv.index_axis(Axis(0), 1))
            .map_collect(|&re, &im| Complex::new(re, im))
            .insert_axis(Axis(0))
            .into_dyn();
        Ok(self.push(Value::Complex(y), Op::ToComplex(x)))
    }

    /// Normalize a complex tensor by its mean (or by the phase of its mean).
    pub fn mean_norm(&mut self, x: Var, mode: OutputNorm, eps: f64) -> Result<Var> {
        let xv = match self.val(x) {
            Value::Complex(a) => a,
            Value::Real(_) => {
                return Err(shape_err("normalization expects a complex tensor".into()))
            }
        };
        let count = T::of(xv.len() as f64);
        let mean = xv
            .iter()
            .fold(Complex::new(T::zero(), T::zero()), |acc, &v| acc + v)
            / count;
        let mag = mean.norm();
        if mag.f64().is_nan() || mag.f64() <= eps {
            return Err(SpafError::DegenerateMean(mag.f64()));
        }
        let factor = match mode {
            OutputNorm::ComplexMean => Complex::new(T::one(), T::zero()) / mean,
            OutputNorm::MeanPhase => mean.conj() / mag,
        };
        let y = xv.mapv(|v| v * factor);
        Ok(self.push(Value::Complex(y), Op::MeanNorm { x, mode, mean }))
    }

    /// Propagate `seed = ∂L/∂output` back to every leaf. Intermediate values
    /// and gradients are released; the tape cannot be replayed.
    pub fn backward(&mut self, output: Var, seed: Value<T>) -> Result<()> {
        if self.consumed {
            return Err(SpafError::TapeConsumed);
        }
        if self.nodes.is_empty() {
            return Err(SpafError::EmptyTape);
        }
        let out = self.nodes.get(output.0).ok_or(SpafError::EmptyTape)?;
        let ov = out.value.as_ref().expect("value present before backward");
        if ov.shape() != seed.shape() || std::mem::discriminant(ov) != std::mem::discriminant(&seed)
        {
            return Err(shape_err(format!(
                "seed gradient {:?} for output {:?}",
                seed.shape(),
                ov.shape()
            )));
        }
        self.consumed = true;
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[output.0].grad = Some(seed);

        for i in (0..=output.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                self.nodes[i].value = None;
                continue;
            };
            let contributions = self.vjp(i, &g);
            self.nodes[i].value = None;
            for (v, c) in contributions {
                match &mut self.nodes[v.0].grad {
                    Some(acc) => acc.accumulate(c),
                    slot => *slot = Some(c),
                }
            }
        }
        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) {
                if node.grad.is_none() {
                    node.grad = node.value.as_ref().map(Value::zeros_like);
                }
            } else {
                node.value = None;
                node.grad = None;
            }
        }
        Ok(())
    }

    fn vjp(&self, i: usize, g: &Value<T>) -> Vec<(Var, Value<T>)> {
        let n = self.n;
        let nn = n * n;
        match &self.nodes[i].op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Conv1x1 { x, w, b } => {
                let xv = self.val(*x).as_real();
                let c = xv.shape()[0];
                let wv = self
                    .val(*w)
                    .as_real()
                    .view()
                    .into_dimensionality::<ndarray::Ix2>()
                    .expect("checked");
                let cout = wv.dim().0;
                let gm = g
                    .as_real()
                    .view()
                    .into_shape_with_order((cout, nn))
                    .expect("standard grad");
                let xm = xv
                    .view()
                    .into_shape_with_order((c, nn))
                    .expect("standard input");
                let gx = wv
                    .t()
                    .dot(&gm)
                    .into_shape_with_order(IxDyn(&[c, n, n]))
                    .expect("reshape");
                let gw = gm.dot(&xm.t()).into_dyn();
                let gb = gm.sum_axis(Axis(1)).into_dyn();
                vec![
                    (*x, Value::Real(gx)),
                    (*w, Value::Real(gw)),
                    (*b, Value::Real(gb)),
                ]
            }
            Op::Conv3x3 { x, k, cols } => {
                let ks = self.val(*k).as_real().shape().to_vec();
                let (cout, cin) = (ks[0], ks[1]);
                let km = self
                    .val(*k)
                    .as_real()
                    .view()
                    .into_shape_with_order((cout, cin * 9))
                    .expect("standard kernel");
                let gm = g
                    .as_real()
                    .view()
                    .into_shape_with_order((cout, nn))
                    .expect("standard grad");
                let gk = gm
                    .dot(&cols.t())
                    .into_shape_with_order(IxDyn(&ks))
                    .expect("reshape");
                let gcols = km.t().dot(&gm);
                let gx = col2im(gcols.view(), cin, n, n);
                vec![(*x, Value::Real(gx)), (*k, Value::Real(gk))]
            }
            Op::Prelu { x, a } => {
                let xv = self.val(*x).as_real();
                let av = self.val(*a).as_real();
                let gv = g.as_real();
                let mut gx = gv.clone();
                let mut ga = ArrayD::<T>::zeros(av.raw_dim());
                for (c, ((mut gxc, xc), &slope)) in gx
                    .axis_iter_mut(Axis(0))
                    .zip(xv.axis_iter(Axis(0)))
                    .zip(av.iter())
                    .enumerate()
                {
                    let mut acc = T::zero();
                    Zip::from(&mut gxc).and(&xc).for_each(|gi, &xi| {
                        if xi <= T::zero() {
                            acc += *gi * xi;
                            *gi *= slope;
                        }
                    });
                    ga[c] = acc;
                }
                vec![(*x, Value::Real(gx)), (*a, Value::Real(ga))]
            }
            Op::ChannelSum(x) => {
                let c = self.val(*x).shape()[0];
                let g0 = g.as_real().index_axis(Axis(0), 0);
                let gx = g0
                    .broadcast((c, n, n))
                    .expect("broadcast")
                    .to_owned()
                    .into_dyn();
                vec![(*x, Value::Real(gx))]
            }
            Op::Fft2(x) => {
                // x real, F unitary: g_x = Re(F^H G)
                let mut z = g.as_complex().as_standard_layout().into_owned();
                for chunk in z.as_slice_mut().expect("standard layout").chunks_mut(nn) {
                    self.fft.inverse_slice(chunk);
                }
                vec![(*x, Value::Real(z.mapv(|v| v.re)))]
            }
            Op::WindowCrop { x, half } => {
                let gv = g
                    .as_complex()
                    .view()
                    .into_dimensionality::<Ix3>()
                    .expect("3-d");
                let (c, w, _) = gv.dim();
                let mut gx = ndarray::Array3::<Complex<T>>::zeros((c, n, n));
                for ch in 0..c {
                    for a in 0..w {
                        for b in 0..w {
                            gx[[ch, wrap(a, *half, n), wrap(b, *half, n)]] += gv[[ch, a, b]];
                        }
                    }
                }
                vec![(*x, Value::Complex(gx.into_dyn()))]
            }
            Op::SpectralScale { s, w } => {
                let sv = self.val(*s).as_complex();
                let s0 = sv.index_axis(Axis(0), 0);
                let wv = self.val(*w).as_real();
                let gv = g.as_complex();
                let mut gw = ArrayD::<T>::zeros(wv.raw_dim());
                let mut gs = ArrayD::<Complex<T>>::zeros(sv.raw_dim());
                {
                    let mut gs0 = gs.index_axis_mut(Axis(0), 0);
                    for ((gch, wch), mut gwch) in gv
                        .axis_iter(Axis(0))
                        .zip(wv.axis_iter(Axis(0)))
                        .zip(gw.axis_iter_mut(Axis(0)))
                    {
                        Zip::from(&mut gwch)
                            .and(&gch)
                            .and(&s0)
                            .for_each(|o, &gi, &si| *o = (gi * si.conj()).re);
                        Zip::from(&mut gs0)
                            .and(&gch)
                            .and(&wch)
                            .for_each(|o, &gi, &wi| *o += gi * wi);
                    }
                }
                vec![(*s, Value::Complex(gs)), (*w, Value::Real(gw))]
            }
            Op::WindowEmbed { x, half } => {
                let gv = g
                    .as_complex()
                    .view()
                    .into_dimensionality::<Ix3>()
                    .expect("3-d");
                let c = gv.dim().0;
                let w = 2 * half + 1;
                let gx = ndarray::Array3::from_shape_fn((c, w, w), |(ch, a, b)| {
                    gv[[ch, wrap(a, *half, n), wrap(b, *half, n)]]
                });
                vec![(*x, Value::Complex(gx.into_dyn()))]
            }
            Op::Ifft2Real(x) => {
                // y = Re(F^H z): G_z = F g
                let mut z = g.as_real().mapv(|v| Complex::new(v, T::zero()));
                for chunk in z.as_slice_mut().expect("fresh array").chunks_mut(nn) {
                    self.fft.forward_slice(chunk);
                }
                vec![(*x, Value::Complex(z))]
            }
            Op::ToComplex(x) => {
                let g0 = g.as_complex().index_axis(Axis(0), 0);
                let mut gx = ndarray::Array3::<T>::zeros((2, n, n));
                gx.slice_mut(s![0, .., ..]).assign(&g0.mapv(|v| v.re));
                gx.slice_mut(s![1, .., ..]).assign(&g0.mapv(|v| v.im));
                vec![(*x, Value::Real(gx.into_dyn()))]
            }
            Op::MeanNorm { x, mode, mean } => {
                let out = self.nodes[i]
                    .value
                    .as_ref()
                    .expect("output value")
                    .as_complex();
                let gv = g.as_complex();
                let count = T::of(gv.len() as f64);
                let gx = match mode {
                    OutputNorm::ComplexMean => {
                        // o = v/μ: G_v = (G_o − mean(G_o·conj o)) / conj μ
                        let corr = Zip::from(gv)
                            .and(out)
                            .fold(Complex::new(T::zero(), T::zero()), |acc, &gi, &oi| {
                                acc + gi * oi.conj()
                            })
                            / count;
                        let inv = Complex::new(T::one(), T::zero()) / mean.conj();
                        gv.mapv(|gi| (gi - corr) * inv)
                    }
                    OutputNorm::MeanPhase => {
                        // o = v·conj(μ)/|μ|: G_v = G_o·μ/|μ| + i·Im(Σ conj(G_o)·o)/(conj μ·N²)
                        let rot = *mean / mean.norm();
                        let a = Zip::from(gv)
                            .and(out)
                            .fold(T::zero(), |acc, &gi, &oi| acc + (gi.conj() * oi).im);
                        let shift = Complex::new(T::zero(), a) / (mean.conj() * count);
                        gv.mapv(|gi| gi * rot + shift)
                    }
                };
                vec![(*x, Value::Complex(gx))]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_real(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<f64> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-1.0..1.0))
    }

    fn rand_complex(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<Complex<f64>> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// Scalar probe L = Re Σ conj(P)·y for a fixed random P, so ∂L/∂y = P.
    fn probe(v: &Value<f64>, p: &Value<f64>) -> f64 {
        match (v, p) {
            (Value::Real(a), Value::Real(b)) => (a * b).sum(),
            (Value::Complex(a), Value::Complex(b)) => {
                a.iter().zip(b.iter()).map(|(x, y)| (y.conj() * x).re).sum()
            }
            _ => unreachable!(),
        }
    }

    fn perturb(v: &Value<f64>, idx: usize, imag: bool, h: f64) -> Value<f64> {
        let mut v = v.clone();
        match &mut v {
            Value::Real(a) => a.as_slice_mut().unwrap()[idx] += h,
            Value::Complex(a) => {
                let z = &mut a.as_slice_mut().unwrap()[idx];
                if imag {
                    z.im += h
                } else {
                    z.re += h
                }
            }
        }
        v
    }

    fn grad_entry(g: &Value<f64>, idx: usize, imag: bool) -> f64 {
        match g {
            Value::Real(a) => a.as_slice().unwrap()[idx],
            Value::Complex(a) => {
                let z = a.as_slice().unwrap()[idx];
                if imag {
                    z.im
                } else {
                    z.re
                }
            }
        }
    }

    /// Check every VJP entry of a single op against central differences.
    fn check_op<F>(inputs: Vec<Value<f64>>, build: F)
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Var,
    {
        let n = 8;
        let run = |vals: &[Value<f64>]| {
            let mut t = Tape::<f64>::new(n);
            let vars: Vec<Var> = vals.iter().map(|v| t.leaf(v.clone())).collect();
            let out = build(&mut t, &vars);
            (t, vars, out)
        };
        let (mut t, vars, out) = run(&inputs);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p = match t.value(out).unwrap() {
            Value::Real(a) => Value::Real(rand_real(a.shape(), &mut rng)),
            Value::Complex(a) => Value::Complex(rand_complex(a.shape(), &mut rng)),
        };
        t.backward(out, p.clone()).unwrap();
        // five-point stencil: exact for the (multi)linear ops, O(h⁴) otherwise
        let h = 1e-3;
        for (k, input) in inputs.iter().enumerate() {
            let g = t.grad(vars[k]).unwrap().clone();
            let len = match input {
                Value::Real(a) => a.len(),
                Value::Complex(a) => a.len(),
            };
            let parts: &[bool] = if matches!(input, Value::Complex(_)) {
                &[false, true]
            } else {
                &[false]
            };
            for idx in (0..len).step_by((len / 12).max(1)) {
                for &imag in parts {
                    let at = |step: f64| {
                        let mut moved = inputs.clone();
                        moved[k] = perturb(input, idx, imag, step);
                        let (tp, _, op) = run(&moved);
                        probe(tp.value(op).unwrap(), &p)
                    };
                    let fd =
                        (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
                    let an = grad_entry(&g, idx, imag);
                    let scale = fd.abs().max(an.abs()).max(1e-3);
                    assert!(
                        (fd - an).abs() / scale < 1e-7,
                        "input {k}[{idx}] fd {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn conv1x1_vjp() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        check_op(
            vec![
                Value::Real(rand_real(&[3, 8, 8], &mut rng)),
                Value::Real(rand_real(&[2, 3], &mut rng)),
                Value::Real(rand_real(&[2], &mut rng)),
            ],
            |t, v| t.conv1x1(v[0], v[1], v[2]).unwrap(),
        );
    }

    #[test]
    fn conv3x3_vjp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        check_op(
            vec![
                Value::Real(rand_real(&[2, 8, 8], &mut rng)),
                Value::Real(rand_real(&[3, 2, 3, 3], &mut rng)),
            ],
            |t, v| t.conv3x3(v[0], v[1]).unwrap(),
        );
    }

    #[test]
    fn prelu_vjp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check_op(
            vec![
                Value::Real(rand_real(&[2, 8, 8], &mut rng)),
                Value::Real(rand_real(&[2], &mut rng)),
            ],
            |t, v| t.prelu(v[0], v[1]).unwrap(),
        );
    }

    #[test]
    fn fourier_branch_vjp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        check_op(
            vec![
                Value::Real(rand_real(&[3, 8, 8], &mut rng)),
                Value::Real(rand_real(&[2, 5, 5], &mut rng)),
            ],
            |t, v| {
                let s = t.channel_sum(v[0]).unwrap();
                let f = t.fft2(s).unwrap();
                let c = t.window_crop(f, 2).unwrap();
                let sc = t.spectral_scale(c, v[1]).unwrap();
                let e = t.window_embed(sc).unwrap();
                t.ifft2_real(e).unwrap()
            },
        );
    }

    #[test]
    fn add_and_to_complex_vjp() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        check_op(
            vec![
                Value::Real(rand_real(&[2, 8, 8], &mut rng)),
                Value::Real(rand_real(&[2, 8, 8], &mut rng)),
            ],
            |t, v| {
                let a = t.add(v[0], v[1]).unwrap();
                t.to_complex(a).unwrap()
            },
        );
    }

    #[test]
    fn mean_norm_vjp_both_modes() {
        for mode in [OutputNorm::ComplexMean, OutputNorm::MeanPhase] {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut v = rand_complex(&[1, 8, 8], &mut rng);
            v.mapv_inplace(|z| z + Complex::new(0.7, -0.4));
            check_op(vec![Value::Complex(v)], move |t, x| {
                t.mean_norm(x[0], mode, 1e-8).unwrap()
            });
        }
    }

    #[test]
    fn crop_and_embed_are_adjoint_inverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = Tape::<f64>::new(8);
        let w = t.leaf(Value::Complex(rand_complex(&[2, 5, 5], &mut rng)));
        let e = t.window_embed(w).unwrap();
        let c = t.window_crop(e, 2).unwrap();
        assert_eq!(t.value(c), t.value(w));
        // outside the window the embedded spectrum is exactly zero
        let ev = t.value(e).unwrap().as_complex().clone();
        let nonzero = ev.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2 * 25);
        assert_eq!(ev[[0, 0, 0]], t.value(w).unwrap().as_complex()[[0, 2, 2]]);
        assert_eq!(ev[[0, 7, 6]], t.value(w).unwrap().as_complex()[[0, 1, 0]]);
    }

    #[test]
    fn backward_errors() {
        let mut t = Tape::<f64>::new(8);
        assert!(matches!(
            t.backward(Var(0), Value::Real(ArrayD::zeros(IxDyn(&[1])))),
            Err(SpafError::EmptyTape)
        ));
        let x = t.leaf(Value::Real(ArrayD::zeros(IxDyn(&[1, 8, 8]))));
        let y = t.channel_sum(x).unwrap();
        assert!(t
            .backward(y, Value::Real(ArrayD::zeros(IxDyn(&[2, 8, 8]))))
            .is_err());
        t.backward(y, Value::Real(ArrayD::ones(IxDyn(&[1, 8, 8]))))
            .unwrap();
        assert!(t.value(y).is_none());
        assert!(t.value(x).is_some());
        assert!(matches!(
            t.backward(y, Value::Real(ArrayD::ones(IxDyn(&[1, 8, 8])))),
            Err(SpafError::TapeConsumed)
        ));
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::<f64>::new(8);
        let x = t.leaf(Value::Real(ArrayD::zeros(IxDyn(&[2, 8, 8]))));
        let k = t.leaf(Value::Real(ArrayD::zeros(IxDyn(&[2, 3, 3, 3]))));
        assert!(t.conv3x3(x, k).is_err());
        let y = t.leaf(Value::Real(ArrayD::zeros(IxDyn(&[3, 8, 8]))));
        assert!(t.add(x, y).is_err());
        let z = t.leaf(Value::Complex(ArrayD::zeros(IxDyn(&[1, 8, 8]))));
        assert!(matches!(
            t.mean_norm(z, OutputNorm::ComplexMean, 1e-8),
            Err(SpafError::DegenerateMean(_))
        ));
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array3::from_shape_fn((2, 8, 8), |_| rng.gen_range(-1.0..1.0));
        let k = rand_real(&[3, 2, 3, 3], &mut rng);
        let mut t = Tape::<f64>::new(8);
        let xv = t.leaf(Value::Real(x.clone().into_dyn()));
        let kv = t.leaf(Value::Real(k.clone()));
        let y = t.conv3x3(xv, kv).unwrap();
        let y = t.value(y).unwrap().as_real().clone();
        for o in 0..3 {
            for r in 0..8 {
                for c in 0..8 {
                    let mut acc = 0.0;
                    for i in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sr, sc) =
                                    (r as isize + ky as isize - 1, c as isize + kx as isize - 1);
                                if (0..8).contains(&sr) && (0..8).contains(&sc) {
                                    acc += k[[o, i, ky, kx]] * x[[i, sr as usize, sc as usize]];
                                }
                            }
                        }
                    }
                    assert!((acc - y[[o, r, c]]).abs() < 1e-12);
                }
            }
        }
    }
}
