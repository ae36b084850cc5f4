//! Regularized boundary integral methods for Stokes flow past a porous body.
//!
//! The body is bounded by a closed level-set surface. Darcy flow inside and
//! Stokes flow outside are coupled through a Dirichlet-Neumann domain
//! decomposition iteration, with every boundary operator evaluated by a
//! direct, grid-free quadrature on the surface.

pub mod benchmarks;
pub mod cli;
pub mod coupled;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod output;
pub mod potentials;
pub mod solvers;
pub mod spectral;
pub mod vec3;

pub use error::{Error, Result};
pub use geometry::{LevelSetSurface, SurfaceQuadrature};
pub use kernels::Regularization;
pub use potentials::Discretization;
pub use vec3::Vec3;

/// Crate version, recorded in every output file header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
