//! Simulation, minimum-action computation and bound verification for
//! stochastic reaction-diffusion equations on truncated integer lattices,
//!
//! ```text
//! du = (−λu − Au − f(u) + g) dt + √ε σ(u) dW,
//! ```
//!
//! with `A` the discrete Laplacian on the box `max_j |i_j| ≤ M` and
//! diagonal noise `σ(u)v = c(‖u‖) a ⊙ v`.
//!
//! The runnable programs under `examples/` walk through each capability.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod lattice;
pub mod mcstats;
pub mod model;
pub mod rate;
pub mod rng;
pub mod simulate;
pub mod skeleton;
pub mod verify;

pub use error::{Error, Result};
pub use lattice::{LatticeShape, StateVector};
pub use model::ModelParams;
