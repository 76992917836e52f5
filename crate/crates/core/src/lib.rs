//! Photoacoustic tomography with finite-size rectangular transducers: forward
//! simulation of spherical sources, learned spatial-impulse-response compensation,
//! universal backprojection and image-quality metrics.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the precision for the common cases.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod compensation;
pub mod config;
pub mod dataset;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod recon;
pub mod scalar;
pub mod spectral;
pub mod study;

pub use error::{Error, Result};
pub use scalar::Real;

/// Measurement tensor in storage precision.
pub type Pressure = forward::PressureTensor<f32>;
/// Measurement tensor for oracles and reference computations.
pub type Pressure64 = forward::PressureTensor<f64>;
pub type Volume = recon::Volume<f32>;
pub type Volume64 = recon::Volume<f64>;
/// Trainable compensation model in training precision.
pub type Model = compensation::DeconvNetModel<f32>;
/// Same model in double precision, for gradient checks.
pub type Model64 = compensation::DeconvNetModel<f64>;
