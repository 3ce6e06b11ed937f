//! Unitary 2-D FFT on square row-major arrays.
//!
//! Both directions scale by `1/n`, so the forward transform is unitary and
//! its adjoint is the inverse transform.

use ndarray::Array2;
use num_complex::Complex;
use num_traits::Float;
use once_cell::sync::Lazy;
use parking_lot::RwLock;
use rustfft::{Fft, FftNum, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

pub struct Fft2<T: FftNum> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: FftNum + Float> Fft2<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: T::one() / T::from(n).expect("grid size fits the float type"),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// In-place unitary forward transform of a contiguous n×n buffer.
    pub fn forward_slice(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.forward);
    }

    /// In-place unitary inverse transform of a contiguous n×n buffer.
    pub fn inverse_slice(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.inverse);
    }

    pub fn forward(&self, a: &mut Array2<Complex<T>>) {
        self.forward_slice(a.as_slice_mut().expect("standard layout"));
    }

    pub fn inverse(&self, a: &mut Array2<Complex<T>>) {
        self.inverse_slice(a.as_slice_mut().expect("standard layout"));
    }

    fn run(&self, data: &mut [Complex<T>], plan: &Arc<dyn Fft<T>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "buffer is not n×n");
        plan.process(data);
        transpose_square(data, n);
        plan.process(data);
        transpose_square(data, n);
        let s = self.scale;
        for v in data.iter_mut() {
            *v = Complex::new(v.re * s, v.im * s);
        }
    }
}

fn transpose_square<T: Copy>(data: &mut [T], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

static PLANS: Lazy<RwLock<HashMap<usize, Arc<Fft2<f64>>>>> = Lazy::new(Default::default);

/// Shared double-precision plan for side length `n`.
pub fn plan(n: usize) -> Arc<Fft2<f64>> {
    if let Some(p) = PLANS.read().get(&n) {
        return p.clone();
    }
    PLANS
        .write()
        .entry(n)
        .or_insert_with(|| Arc::new(Fft2::new(n)))
        .clone()
}

pub fn fft2(a: &Array2<Complex<f64>>) -> Array2<Complex<f64>> {
    let mut out = a.as_standard_layout().into_owned();
    plan(a.nrows()).forward(&mut out);
    out
}

pub fn ifft2(a: &Array2<Complex<f64>>) -> Array2<Complex<f64>> {
    let mut out = a.as_standard_layout().into_owned();
    plan(a.nrows()).inverse(&mut out);
    out
}

pub fn fft2_real(a: &Array2<f64>) -> Array2<Complex<f64>> {
    let mut out = a.mapv(|v| Complex::new(v, 0.0));
    plan(a.nrows()).forward(&mut out);
    out
}

/// Move index `n/2` to index 0 along both axes (centered → FFT order).
pub fn ifftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (rows, cols) = a.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        a[[(r + rows / 2) % rows, (c + cols / 2) % cols]].clone()
    })
}
