//! A small spectral-spatial network for hologram reconstruction, built on a
//! minimal reverse-mode tape and trained only against the physics-consistency
//! loss of the measured holograms.

pub mod config;
pub mod error;
pub mod io;
pub mod net;
pub mod real;
pub mod tape;
pub mod train;

pub use config::{OutputNorm, SpafConfig};
pub use error::{Result, SpafError};
pub use net::{loss_and_gradients, network_forward, BlockWeights, SpafWeights};
pub use real::Real;
pub use tape::{Tape, Value, Var};
pub use train::{train, TrainConfig, TrainLog, TrainOutcome};
