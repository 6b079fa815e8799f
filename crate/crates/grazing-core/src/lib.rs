//! Deterministic quadrature workbench for the grazing collision limit.
//!
//! The crate evaluates weak forms of the Boltzmann and Landau collision
//! operators, their entropy dissipations and dual (affine) representations,
//! mobility actions, a per-shell spherical Poisson projection and the
//! Fourier-side compactness diagnostics, all for closed-form Gaussian-mixture
//! densities and analytic test functions.
//!
//! Velocity integrals run over a fixed node set and are reduced with a
//! fixed-shape pairwise tree, so results are bit-identical whether the
//! `parallel` feature (rayon) is on or off.

pub mod compactness;
pub mod dissipation;
pub mod error;
pub mod functions;
pub mod geometry;
pub mod kernels;
pub mod operators;
pub mod par;
pub mod projection;
pub mod quadrature;

pub use error::{Error, Result};
pub use geometry::{Mat3, Vec3};
