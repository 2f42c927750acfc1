//! Numerical laboratory for collapsing Riemannian manifolds.
//!
//! Discrete manifolds (periodic grids and triangle meshes), their Laplacian and
//! Hessian, low eigenfunctions, harmonic splitting maps, fiber-tangential flows
//! and the resulting interior estimates.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments
)]

pub mod config;
pub mod error;
pub mod estimates;
pub mod flow;
pub mod geom;
pub mod linalg;
pub mod manifold;
pub mod operators;
pub mod pipeline;
pub mod runner;
pub mod spectral;
pub mod splitting;

pub use error::{Error, Result};
