//! Coherent-imaging engine for lens-free in-line holography.
//!
//! The crate covers the whole physics side of self-supervised hologram
//! reconstruction: complex fields and hologram stacks, angular-spectrum
//! propagation, synthetic random objects, the physics-consistency loss with
//! its analytic gradient, classical and variational solvers, and the
//! reconstruction metrics.

pub mod audit;
pub mod cfld;
pub mod dataset;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod propagation;
pub mod solvers;
pub mod synth;

pub use error::{HoloError, Result};
pub use field::{ComplexField, HologramPlane, HologramStack, PhaseMap, DEFAULT_NORM_EPS};
pub use grid::OpticalGrid;
pub use loss::{Estimate, Gradient, LossMode, LossReport, LossWeights};
pub use metrics::MetricsReport;
pub use propagation::{adjoint_propagate, propagate, simulate_hologram_stack, transfer_function};
pub use solvers::{SolveResult, SolverConfig};
