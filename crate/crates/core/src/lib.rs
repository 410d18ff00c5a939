//! Optimal orthogonal AMP for rank-one spiked matrices `Y = (θ/N)x⋆x⋆ᵀ + W`
//! with rotationally invariant noise: scalar channels, spectral transforms,
//! state evolution and a matrix-free iteration engine.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod par;
pub mod priors;
pub mod quad;
pub mod spectral;
pub mod state_evolution;

pub use error::{Error, Result};
