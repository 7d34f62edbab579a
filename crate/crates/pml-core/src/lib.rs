//! Numerical laboratory for p-capacitary functions on planar Jordan
//! domains: nonlinear finite elements for the p-Laplacian, extraction of
//! the associated boundary Riesz measure, local-dimension estimation of
//! that measure, and a discrete half-plane Riemann map with the
//! boundary-box constructions used to probe gradient and measure bounds.

pub mod conformal;
pub mod dimension;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod hash;
pub mod measure;

pub use error::{Error, Result};
