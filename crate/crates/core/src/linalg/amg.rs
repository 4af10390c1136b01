//! Smoothed-aggregation algebraic multigrid, used as a symmetric
//! preconditioner for the Dirichlet Laplacian and its restrictions.

use nalgebra::{Cholesky, DVector, Dyn};

use super::{CsrMatrix, Preconditioner};
use crate::error::{Error, Result};

const COARSE_SIZE: usize = 400;
const MAX_LEVELS: usize = 25;
/// Strength threshold on the finest level. Galerkin operators spread their
/// couplings over many weak neighbours, so coarser levels keep every link.
const STRENGTH_THETA: f64 = 0.08;

struct Level {
    a: CsrMatrix,
    p: CsrMatrix,
    r: CsrMatrix,
    diag: Vec<f64>,
}

/// V-cycle preconditioner with symmetric Gauss-Seidel smoothing and a dense
/// Cholesky solve on the coarsest level.
pub struct Amg {
    levels: Vec<Level>,
    coarse_a: CsrMatrix,
    coarse: Cholesky<f64, Dyn>,
}

impl Amg {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut levels = Vec::new();
        let mut current = a.clone();
        while current.n_rows() > COARSE_SIZE && levels.len() < MAX_LEVELS {
            let theta = if levels.is_empty() { STRENGTH_THETA } else { 0.0 };
            let aggregates = aggregate(&current, theta);
            let n_agg = aggregates.iter().copied().max().map_or(0, |m| m + 1);
            if n_agg == 0 || n_agg as f64 > 0.9 * current.n_rows() as f64 {
                break;
            }
            let p = smoothed_prolongator(&current, &aggregates, n_agg);
            let r = p.transpose();
            let coarse = r.matmul(&current.matmul(&p));
            let diag = current.diagonal();
            levels.push(Level {
                a: current,
                p,
                r,
                diag,
            });
            current = coarse;
        }
        let dense = current.to_dense();
        let coarse = Cholesky::new(dense).ok_or_else(|| {
            Error::Precondition("coarse operator is not positive definite".into())
        })?;
        Ok(Amg {
            levels,
            coarse_a: current,
            coarse,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len() + 1
    }

    fn cycle(&self, level: usize, b: &[f64], x: &mut [f64]) {
        if level == self.levels.len() {
            let sol = self.coarse.solve(&DVector::from_column_slice(b));
            x.copy_from_slice(sol.as_slice());
            debug_assert_eq!(x.len(), self.coarse_a.n_rows());
            return;
        }
        let lv = &self.levels[level];
        x.iter_mut().for_each(|v| *v = 0.0);
        gauss_seidel(&lv.a, &lv.diag, b, x, true);
        let mut res = lv.a.mul_vec(x);
        for (r, bi) in res.iter_mut().zip(b) {
            *r = bi - *r;
        }
        let bc = lv.r.mul_vec(&res);
        let mut xc = vec![0.0; bc.len()];
        self.cycle(level + 1, &bc, &mut xc);
        let corr = lv.p.mul_vec(&xc);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += ci;
        }
        gauss_seidel(&lv.a, &lv.diag, b, x, false);
    }
}

impl Preconditioner for Amg {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, z);
    }
}

fn gauss_seidel(a: &CsrMatrix, diag: &[f64], b: &[f64], x: &mut [f64], forward: bool) {
    let n = a.n_rows();
    let mut sweep = |i: usize| {
        let mut s = b[i];
        for (j, v) in a.row(i) {
            if j != i {
                s -= v * x[j];
            }
        }
        x[i] = s / diag[i];
    };
    if forward {
        (0..n).for_each(&mut sweep);
    } else {
        (0..n).rev().for_each(&mut sweep);
    }
}

/// Greedy three-pass aggregation on the strength graph.
fn aggregate(a: &CsrMatrix, theta: f64) -> Vec<usize> {
    let n = a.n_rows();
    let diag = a.diagonal();
    let strong: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            a.row(i)
                .filter(|&(j, v)| {
                    j != i && v != 0.0 && v.abs() >= theta * (diag[i] * diag[j]).abs().sqrt()
                })
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    const NONE: usize = usize::MAX;
    let mut agg = vec![NONE; n];
    let mut n_agg = 0;
    for i in 0..n {
        if agg[i] == NONE && strong[i].iter().all(|&j| agg[j] == NONE) {
            agg[i] = n_agg;
            for &j in &strong[i] {
                agg[j] = n_agg;
            }
            n_agg += 1;
        }
    }
    let snapshot = agg.clone();
    for i in 0..n {
        if agg[i] == NONE {
            if let Some(&j) = strong[i].iter().find(|&&j| snapshot[j] != NONE) {
                agg[i] = snapshot[j];
            }
        }
    }
    for i in 0..n {
        if agg[i] == NONE {
            agg[i] = n_agg;
            for &j in &strong[i] {
                if agg[j] == NONE {
                    agg[j] = n_agg;
                }
            }
            n_agg += 1;
        }
    }
    agg
}

/// `(I - omega D^{-1} A) T` with `T` the normalised piecewise-constant
/// tentative prolongator and `omega = 4 / (3 rho)`, `rho` a Gershgorin bound
/// on the spectral radius of `D^{-1} A`.
fn smoothed_prolongator(a: &CsrMatrix, agg: &[usize], n_agg: usize) -> CsrMatrix {
    let n = a.n_rows();
    let mut sizes = vec![0usize; n_agg];
    for &g in agg {
        sizes[g] += 1;
    }
    let tentative = CsrMatrix::from_rows(
        n_agg,
        agg.iter()
            .map(|&g| vec![(g, 1.0 / (sizes[g] as f64).sqrt())])
            .collect(),
    );
    let diag = a.diagonal();
    let rho = (0..n)
        .map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>() / diag[i])
        .fold(0.0, f64::max);
    let omega = 4.0 / (3.0 * rho);
    let smoother = CsrMatrix::from_rows(
        n,
        (0..n)
            .map(|i| {
                a.row(i)
                    .map(|(j, v)| {
                        let id = if i == j { 1.0 } else { 0.0 };
                        (j, id - omega * v / diag[i])
                    })
                    .collect()
            })
            .collect(),
    );
    smoother.matmul(&tentative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pcg, Identity, PcgOptions};

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    fn laplacian_2d(n: usize) -> CsrMatrix {
        let idx = |i: usize, j: usize| i * n + j;
        let rows = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let mut r = vec![(k, 4.0)];
                if i > 0 {
                    r.push((idx(i - 1, j), -1.0));
                }
                if i + 1 < n {
                    r.push((idx(i + 1, j), -1.0));
                }
                if j > 0 {
                    r.push((idx(i, j - 1), -1.0));
                }
                if j + 1 < n {
                    r.push((idx(i, j + 1), -1.0));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(n * n, rows)
    }

    #[test]
    fn small_system_is_solved_exactly() {
        let a = laplacian_1d(50);
        let amg = Amg::new(&a).unwrap();
        assert_eq!(amg.n_levels(), 1);
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        amg.apply(&b, &mut x);
        let r = a.mul_vec(&x);
        assert!(r.iter().zip(&b).all(|(r, b)| (r - b).abs() < 1e-10));
    }

    #[test]
    fn preconditioned_cg_iterations_are_mesh_independent() {
        let mut iters = Vec::new();
        for n in [64usize, 128, 256] {
            let a = laplacian_2d(n);
            let amg = Amg::new(&a).unwrap();
            assert!(amg.n_levels() > 1);
            let b = vec![1.0; n * n];
            let sol = pcg(&a, &amg, &b, None, &PcgOptions::new(1e-10, 200)).unwrap();
            iters.push(sol.iterations);
        }
        assert!(iters.iter().all(|&k| k < 40), "{iters:?}");
        // Plain CG on the largest grid needs far more.
        let a = laplacian_2d(256);
        let b = vec![1.0; 256 * 256];
        let plain = pcg(&a, &Identity, &b, None, &PcgOptions::new(1e-10, 5000)).unwrap();
        assert!(plain.iterations > 3 * iters[2]);
    }
}
