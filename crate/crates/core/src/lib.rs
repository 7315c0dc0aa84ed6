//! Variable-bandwidth diffusion kernels.
//!
//! Builds sparse discrete approximations of Kolmogorov operators
//! `Δf + c₁ ∇f·∇q/q` from point clouds sampled with density `q`, using a
//! Gaussian kernel whose length scale follows an estimated density
//! (`ρ = q₀^β`). The pipeline is
//!
//! 1. [`neighbors::knn`] exact nearest neighbors,
//! 2. [`density::BandwidthProfile::estimate`] pilot bandwidth and density,
//! 3. [`kernel::GeneratorMatrices::build`] kernel normalization cascade and
//!    its symmetric conjugate,
//! 4. [`spectral::eigs_near_zero`] eigenpairs closest to zero,
//!
//! with [`tuning`] for automatic `ε` selection and dimension estimates,
//! [`analytic`] for closed-form references and [`harness`] for end-to-end
//! experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod density;
pub mod error;
mod factor;
pub mod harness;
pub mod kernel;
mod lanczos;
pub mod neighbors;
pub mod pointcloud;
pub mod sparse;
pub mod special;
pub mod spectral;
pub mod tuning;

pub use error::{Error, Result};
pub use pointcloud::{Coords, PointCloud};
