//! Sparse linear algebra: CSR storage, an algebraic multigrid
//! preconditioner, preconditioned CG and block eigensolvers.

mod amg;
mod cg;
mod csr;
mod lobpcg;

pub use amg::Amg;
pub use cg::{pcg, PcgOptions, PcgSolution};
pub use csr::CsrMatrix;
pub use lobpcg::{dense_eigenpairs, lobpcg, EigenResult, LobpcgOptions};

/// A symmetric operator acting on vectors of length [`LinearOperator::dim`].
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Approximate inverse applied as `z = M^{-1} r`; `z` is overwritten.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// The trivial preconditioner.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
