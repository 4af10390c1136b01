//! Preconditioned conjugate gradients for SPD systems.

use super::{dot, LinearOperator, Preconditioner};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct PcgOptions {
    /// Relative residual target `||b - A x|| <= tol ||b||`.
    pub tol: f64,
    pub max_iter: usize,
}

impl PcgOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        PcgOptions { tol, max_iter }
    }
}

#[derive(Clone, Debug)]
pub struct PcgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual, recomputed from `b - A x`.
    pub relative_residual: f64,
}

pub fn pcg<A, P>(
    a: &A,
    prec: &P,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &PcgOptions,
) -> Result<PcgSolution>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = a.dim();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(PcgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let mut r = vec![0.0; n];
    a.apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    prec.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    while rel > opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::NoConvergence {
                solver: "pcg",
                budget: opts.max_iter,
                residual: rel,
            });
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Precondition(
                "operator is not positive definite".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= opts.tol {
            // Guard against drift of the recursive residual.
            let mut true_r = vec![0.0; n];
            a.apply(&x, &mut true_r);
            for (ti, bi) in true_r.iter_mut().zip(b) {
                *ti = bi - *ti;
            }
            rel = dot(&true_r, &true_r).sqrt() / b_norm;
            if rel <= opts.tol {
                break;
            }
            r = true_r;
        }
        prec.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(PcgSolution {
        x,
        iterations,
        relative_residual: rel,
    })
}
