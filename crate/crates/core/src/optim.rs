//! Adam and learning-rate schedules shared by the solvers and the network trainer.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default initial learning rate.
pub const DEFAULT_LR: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    CosineAnnealing,
    Constant,
}

impl LrSchedule {
    /// Learning rate for step `t` of `total` (0-based). Cosine annealing
    /// decays from `lr0` at t = 0 to zero at t = total.
    pub fn lr_at(&self, lr0: f64, t: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => lr0,
            LrSchedule::CosineAnnealing => {
                if total == 0 {
                    return lr0;
                }
                let frac = (t.min(total) as f64) / total as f64;
                0.5 * lr0 * (1.0 + (PI * frac).cos())
            }
        }
    }
}

impl std::str::FromStr for LrSchedule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cosine" | "cosine-annealing" => Ok(Self::CosineAnnealing),
            "constant" => Ok(Self::Constant),
            _ => Err(format!("unknown schedule {s:?}")),
        }
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Float> Adam<T> {
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(len: usize) -> Self {
        Self::with_params(
            len,
            T::from(0.9).unwrap(),
            T::from(0.999).unwrap(),
            T::from(1e-8).unwrap(),
        )
    }

    pub fn with_params(len: usize, beta1: T, beta2: T, eps: T) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: T) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.t);
        let bc2 = one - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
