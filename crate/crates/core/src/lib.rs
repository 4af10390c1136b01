//! Numerical laboratory for the Dirichlet capacity of excised domains.
//!
//! Domains are masks on uniform 2D/3D grids ([`domain`]); the Dirichlet
//! Laplacian and its lowest eigenpairs live in [`spectral`]; [`capacity`]
//! computes the Dirichlet and electrostatic capacities of excision regions;
//! [`bounds`] evaluates the spectral-stability constants and checks; and
//! [`faberkrahn`] runs the near-ball stability pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod capacity;
pub mod convergence;
pub mod domain;
pub mod error;
pub mod faberkrahn;
pub mod linalg;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
