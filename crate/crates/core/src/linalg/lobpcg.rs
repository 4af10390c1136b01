//! Block eigensolvers for the lowest eigenpairs of a symmetric positive
//! definite operator.
//!
//! [`lobpcg`] is a locally optimal block preconditioned CG iteration with
//! SVQB orthonormalisation of the search directions. Small problems go
//! through [`dense_eigenpairs`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LinearOperator, Preconditioner};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LobpcgOptions {
    /// Converged when `||A x - lambda x|| <= tol * lambda` for unit `x`.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block columns carried beyond the requested `k`.
    pub guard: usize,
    pub seed: u64,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        LobpcgOptions {
            tol: 1e-9,
            max_iter: 1000,
            guard: 4,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Euclidean-unit eigenvectors, one per column.
    pub vectors: DMatrix<f64>,
    /// `||A x - lambda x|| / lambda` per pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn apply_block<A: LinearOperator + ?Sized>(a: &A, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut y = DMatrix::zeros(n, x.ncols());
    for (xc, yc) in x
        .as_slice()
        .chunks_exact(n)
        .zip(y.as_mut_slice().chunks_exact_mut(n))
    {
        a.apply(xc, yc);
    }
    y
}

fn precondition_block<P: Preconditioner + ?Sized>(t: &P, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = r.nrows();
    let mut z = DMatrix::zeros(n, r.ncols());
    for (rc, zc) in r
        .as_slice()
        .chunks_exact(n)
        .zip(z.as_mut_slice().chunks_exact_mut(n))
    {
        t.apply(rc, zc);
    }
    z
}

fn symmetrize(g: &mut DMatrix<f64>) {
    let n = g.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
fn sorted_eigen(mut g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    symmetrize(&mut g);
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vals, vecs)
}

/// Orthonormalises the columns of `q` by SVQB, dropping directions whose
/// Gram eigenvalue falls below `drop * max`. Returns `None` when nothing
/// survives.
fn svqb(q: &DMatrix<f64>, drop: f64) -> Option<DMatrix<f64>> {
    if q.ncols() == 0 {
        return None;
    }
    let g = q.tr_mul(q);
    let d: Vec<f64> = (0..g.nrows())
        .map(|i| {
            let v = g[(i, i)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| d[i] * g[(i, j)] * d[j]);
    let (vals, vecs) = sorted_eigen(scaled);
    let top = vals.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return None;
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > drop * top).collect();
    if keep.is_empty() {
        return None;
    }
    let transform = DMatrix::from_fn(g.nrows(), keep.len(), |i, c| {
        d[i] * vecs[(i, keep[c])] / vals[keep[c]].sqrt()
    });
    Some(q * transform)
}

fn orthogonalize_against(q: &mut DMatrix<f64>, x: &DMatrix<f64>) {
    for _ in 0..2 {
        let c = x.tr_mul(q);
        *q -= x * c;
    }
}

/// All eigenpairs of a small operator by assembling it densely.
pub fn dense_eigenpairs<A: LinearOperator + ?Sized>(a: &A, k: usize) -> Result<EigenResult> {
    let n = a.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "requested {k} eigenpairs of an operator of size {n}"
        )));
    }
    let dense = apply_block(a, &DMatrix::identity(n, n));
    let (vals, vecs) = sorted_eigen(dense);
    let vectors = vecs.columns(0, k).into_owned();
    let values = vals[..k].to_vec();
    let ax = apply_block(a, &vectors);
    let residuals = residual_norms(&ax, &vectors, &values);
    Ok(EigenResult {
        values,
        vectors,
        residuals,
        iterations: 0,
    })
}

fn residual_norms(ax: &DMatrix<f64>, x: &DMatrix<f64>, vals: &[f64]) -> Vec<f64> {
    vals.iter()
        .enumerate()
        .map(|(j, &l)| {
            let r = (ax.column(j) - x.column(j) * l).norm();
            if l.abs() > 0.0 {
                r / l.abs()
            } else {
                r
            }
        })
        .collect()
}

/// Lowest `k` eigenpairs of `a`, preconditioned by `t`.
pub fn lobpcg<A, P>(a: &A, t: &P, k: usize, opts: &LobpcgOptions) -> Result<EigenResult>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = a.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "requested {k} eigenpairs of an operator of size {n}"
        )));
    }
    let m = (k + opts.guard).min(n);
    if n <= 4 * m {
        return dense_eigenpairs(a, k);
    }
    let drop = 1e3 * f64::EPSILON;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x0 = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
    let x0 = svqb(&x0, drop).filter(|x| x.ncols() == m).ok_or_else(|| {
        Error::Precondition("degenerate random starting block".into())
    })?;
    let ax0 = apply_block(a, &x0);
    let (vals, c) = sorted_eigen(x0.tr_mul(&ax0));
    let mut x = &x0 * &c;
    let mut ax = apply_block(a, &x);
    let mut lambda = vals;
    let mut p: Option<DMatrix<f64>> = None;

    for iter in 0..=opts.max_iter {
        let resid = residual_norms(&ax, &x, &lambda);
        if resid[..k].iter().all(|&r| r <= opts.tol) {
            return Ok(EigenResult {
                values: lambda[..k].to_vec(),
                vectors: x.columns(0, k).into_owned(),
                residuals: resid[..k].to_vec(),
                iterations: iter,
            });
        }
        if iter == opts.max_iter {
            return Err(Error::NoConvergence {
                solver: "lobpcg",
                budget: opts.max_iter,
                residual: resid[..k].iter().copied().fold(0.0, f64::max),
            });
        }
        let active: Vec<usize> = (0..m).filter(|&j| resid[j] > opts.tol).collect();
        let r = DMatrix::from_fn(n, active.len(), |i, c| {
            ax[(i, active[c])] - lambda[active[c]] * x[(i, active[c])]
        });
        let w = precondition_block(t, &r);
        let mut q = match &p {
            Some(p) => {
                let mut q = DMatrix::zeros(n, w.ncols() + p.ncols());
                q.columns_mut(0, w.ncols()).copy_from(&w);
                q.columns_mut(w.ncols(), p.ncols()).copy_from(p);
                q
            }
            None => w,
        };
        orthogonalize_against(&mut q, &x);
        let q = svqb(&q, drop).and_then(|mut q| {
            // A second pass restores orthogonality lost to cancellation.
            orthogonalize_against(&mut q, &x);
            svqb(&q, drop)
        });
        let Some(q) = q else {
            // Search space exhausted; re-seed the momentum and continue.
            p = None;
            continue;
        };
        let aq = apply_block(a, &q);
        let nq = q.ncols();
        let mut g = DMatrix::zeros(m + nq, m + nq);
        g.view_mut((0, 0), (m, m)).copy_from(&x.tr_mul(&ax));
        let xaq = x.tr_mul(&aq);
        g.view_mut((0, m), (m, nq)).copy_from(&xaq);
        g.view_mut((m, 0), (nq, m)).copy_from(&xaq.transpose());
        g.view_mut((m, m), (nq, nq)).copy_from(&q.tr_mul(&aq));
        let (vals, c) = sorted_eigen(g);
        let cx = c.view((0, 0), (m, m));
        let cq = c.view((m, 0), (nq, m));
        let pn = &q * cq;
        x = &x * cx + &pn;
        p = Some(pn);
        ax = apply_block(a, &x);
        lambda = vals[..m].to_vec();
        // Keep the block orthonormal against slow drift.
        if (x.tr_mul(&x) - DMatrix::<f64>::identity(m, m)).amax() > 1e-10 {
            if let Some(xo) = svqb(&x, drop).filter(|xo| xo.ncols() == m) {
                let axo = apply_block(a, &xo);
                let (v, c) = sorted_eigen(xo.tr_mul(&axo));
                x = &xo * &c;
                ax = axo * &c;
                lambda = v;
            }
        }
    }
    unreachable!("loop returns on its final iteration")
}
