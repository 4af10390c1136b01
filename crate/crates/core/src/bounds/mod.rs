//! Constants and checks of the spectral-stability theorem for excised
//! domains, the proof's test-function diagnostics, and the two linear-algebra
//! lemmas behind the stability pipeline.
//!
//! Every check is posed for the discrete operators: the argument is purely
//! variational, so the inequalities hold for the matrices themselves up to
//! solver tolerance.

mod lemmas;

pub use lemmas::{
    a_sequence, comparison_trial, eigenvalue_comparison, gram_schmidt_trial, lemma_suite,
    q_gram_schmidt, q_gram_schmidt_unchecked, LemmaCompResult, LemmaGSResult, TrialOutcome,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::capacity::{dirichlet_capacity, CapacityOptions, CapacityResult};
use crate::domain::{GridDomain, Region};
use crate::error::{Error, Result};
use crate::report::{CheckRecord, ExperimentReport};
use crate::spectral::{assemble, RatioBounds, SpectralData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub b1: f64,
    /// `ε_1, …, ε_k`.
    pub eps: Vec<f64>,
    /// `C_1, …, C_k`.
    pub c: Vec<f64>,
    pub m_k: f64,
    pub big_m_k: f64,
    /// Per-index `m_i`, `M_i` used for `ε_i`, `C_i`.
    pub m: Vec<f64>,
    pub grad: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub margin: usize,
}

impl TheoremConstants {
    pub fn k(&self) -> usize {
        self.eps.len()
    }
}

/// `ε_k` for `k ≥ 2`.
pub fn eps_k(k: usize, lambda1: f64, m_k: f64) -> f64 {
    let s = m_k + lambda1.sqrt();
    lambda1 * lambda1 / (4.0 * (k * k) as f64 * s.powi(4))
}

/// `C_k` for `k ≥ 2`, as it follows from the final min-max estimate
/// `λ_k(Ω∖A) ≤ λ_k + 4kλ_k X₁ + 2k X₂`.
pub fn c_k(k: usize, lambda1: f64, lambda_k: f64, m_k: f64, big_m_k: f64) -> f64 {
    let r1 = lambda1.sqrt();
    let x1 = (1.0 + m_k / r1).powi(2);
    let x2 = (m_k + big_m_k / r1 + lambda_k.sqrt()).powi(2);
    2.0 * k as f64 * (2.0 * lambda_k * x1 + x2)
}

pub fn theorem_constants(
    spec: &SpectralData,
    ratios: &RatioBounds,
    k: usize,
) -> Result<TheoremConstants> {
    if k == 0 || spec.k() < k.max(2) || ratios.k() < k {
        return Err(Error::InvalidParameter(format!(
            "k = {k} needs {} eigenvalues and {k} ratio bounds, got {} and {}",
            k.max(2),
            spec.k(),
            ratios.k()
        )));
    }
    let l = &spec.eigenvalues;
    let gap = l[1] - l[0];
    let slack = 10.0 * (spec.residuals[0] + spec.residuals[1]) + 1e-8 * l[1];
    if gap <= slack {
        return Err(Error::DegenerateGap { gap });
    }
    let b1 = (l[0] + l[1]) / gap;
    let mut eps = Vec::with_capacity(k);
    let mut c = Vec::with_capacity(k);
    for i in 1..=k {
        if i == 1 {
            eps.push(l[0] / 16.0);
            c.push(14.0 * l[0].sqrt());
        } else {
            eps.push(eps_k(i, l[0], ratios.m[i - 1]));
            c.push(c_k(i, l[0], l[i - 1], ratios.m[i - 1], ratios.grad[i - 1]));
        }
    }
    Ok(TheoremConstants {
        b1,
        eps,
        c,
        m_k: ratios.m[k - 1],
        big_m_k: ratios.grad[k - 1],
        m: ratios.m[..k].to_vec(),
        grad: ratios.grad[..k].to_vec(),
        lambdas: l[..k].to_vec(),
        margin: ratios.admissible_margin,
    })
}

fn check_same(spec_base: &SpectralData, domain: &GridDomain) -> Result<()> {
    if spec_base.domain_id != domain.id() {
        return Err(Error::InvalidParameter(
            "base spectrum does not belong to the domain".into(),
        ));
    }
    Ok(())
}

/// `Ca(A) ≤ B₁ (λ₁(Ω∖A) − λ₁(Ω))`.
pub fn check_capacity_lower(
    domain: &GridDomain,
    region: &Region,
    spec_base: &SpectralData,
    spec_excised: &SpectralData,
    consts: &TheoremConstants,
) -> Result<ExperimentReport> {
    check_same(spec_base, domain)?;
    let cap = dirichlet_capacity(domain, region, spec_base, &CapacityOptions::default())?;
    Ok(capacity_lower_report(&cap, spec_base, spec_excised, consts))
}

/// As [`check_capacity_lower`] with a precomputed capacity.
pub fn capacity_lower_report(
    cap: &CapacityResult,
    spec_base: &SpectralData,
    spec_excised: &SpectralData,
    consts: &TheoremConstants,
) -> ExperimentReport {
    let shift = spec_excised.eigenvalues[0] - spec_base.eigenvalues[0];
    let rhs = consts.b1 * shift;
    let tol = 2.0
        * (consts.b1 * (spec_base.residuals[0] + spec_excised.residuals[0])
            + 1e-10 * cap.value
            + 1e-12 * spec_base.eigenvalues[0]);
    let mut report = ExperimentReport::new("capacity_lower");
    report.value("ca", cap.value);
    report.value("shift_1", shift);
    report.push(
        CheckRecord::le("ca_le_b1_shift", cap.value, rhs, tol)
            .with("b1", consts.b1)
            .with("shift", shift),
    );
    report
}

/// `0 ≤ λ_i(Ω∖A) − λ_i(Ω) ≤ C_i Ca^{1/2}(A)` for `i ≤ k`, when `Ca(A) < ε_i`.
pub fn check_spectrum_upper(
    domain: &GridDomain,
    region: &Region,
    spec_base: &SpectralData,
    spec_excised: &SpectralData,
    consts: &TheoremConstants,
    k: usize,
) -> Result<ExperimentReport> {
    check_same(spec_base, domain)?;
    let cap = dirichlet_capacity(domain, region, spec_base, &CapacityOptions::default())?;
    spectrum_upper_report(&cap, spec_base, spec_excised, consts, k)
}

/// As [`check_spectrum_upper`] with a precomputed capacity.
pub fn spectrum_upper_report(
    cap: &CapacityResult,
    spec_base: &SpectralData,
    spec_excised: &SpectralData,
    consts: &TheoremConstants,
    k: usize,
) -> Result<ExperimentReport> {
    if k > consts.k() || k > spec_base.k() || k > spec_excised.k() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the available constants or eigenvalues"
        )));
    }
    let ca = cap.value.max(0.0);
    let mut report = ExperimentReport::new("spectrum_upper");
    report.value("ca", cap.value);
    for i in 0..k {
        let shift = spec_excised.eigenvalues[i] - spec_base.eigenvalues[i];
        let tol = 2.0 * (spec_base.residuals[i] + spec_excised.residuals[i])
            + 1e-12 * spec_base.eigenvalues[i];
        report.value(format!("shift_{}", i + 1), shift);
        report.push(CheckRecord::le(format!("shift_nonnegative_{}", i + 1), 0.0, shift, tol));
        let rhs = consts.c[i] * ca.sqrt();
        let name = format!("shift_le_c_sqrt_ca_{}", i + 1);
        let rec = if ca < consts.eps[i] {
            CheckRecord::le(name, shift, rhs, tol)
        } else {
            CheckRecord::not_applicable(name, shift, rhs)
        };
        report.push(rec.with("eps", consts.eps[i]).with("c", consts.c[i]));
    }
    Ok(report)
}

/// The proof's test family `ψ_i = φ_i (1 − f_A/φ₁)`: mass and stiffness
/// deviations against `X₁`, `X₂`, and linear independence below the
/// threshold `λ₁²/(4k²(m_k+√λ₁)⁴)`.
pub fn proof_diagnostics(
    domain: &GridDomain,
    region: &Region,
    spec_base: &SpectralData,
    cap: &CapacityResult,
    k: usize,
    ratios: &RatioBounds,
) -> Result<ExperimentReport> {
    check_same(spec_base, domain)?;
    if k == 0 || k > spec_base.k() || k > ratios.k() {
        return Err(Error::InvalidParameter(format!("k = {k} out of range")));
    }
    let phi1 = spec_base.ground_state();
    let max1 = phi1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dof = domain.dof_map();
    let in_region = region.mask();
    let cells = domain.active_indices();
    let n = cells.len();
    // 1 − f_A/φ₁ per DOF; exactly zero on A ∩ Ω.
    let mut weight = vec![0.0; n];
    for &i in &cells {
        let d = dof[i];
        if in_region[i] {
            continue;
        }
        if phi1[d] < 1e-12 * max1 {
            return Err(Error::VanishingGroundState {
                cell: i,
                detail: "φ₁ vanishes inside Ω∖A; the ratio f_A/φ₁ is undefined".into(),
            });
        }
        weight[d] = 1.0 - cap.potential[d] / phi1[d];
    }
    let psi: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            spec_base.eigenfunctions[i]
                .iter()
                .zip(&weight)
                .map(|(p, w)| p * w)
                .collect()
        })
        .collect();
    let op = assemble(domain);
    let lp: Vec<Vec<f64>> = psi.iter().map(|v| op.matrix().mul_vec(v)).collect();
    let vol = domain.cell_volume();
    let mass = DMatrix::from_fn(k, k, |i, j| vol * crate::linalg::dot(&psi[i], &psi[j]));
    let stiff = DMatrix::from_fn(k, k, |i, j| vol * crate::linalg::dot(&psi[i], &lp[j]));

    let lambda1 = spec_base.eigenvalues[0];
    let lambda_k = spec_base.eigenvalues[k - 1];
    let m_k = ratios.m[k - 1];
    let big_m_k = ratios.grad[k - 1];
    let ca = cap.value.max(0.0);
    let r1 = lambda1.sqrt();
    let x1 = (1.0 + m_k / r1).powi(2) * ca.sqrt();
    let x2 = (m_k + big_m_k / r1 + lambda_k.sqrt()).powi(2) * ca.sqrt();
    let threshold = lambda1 * lambda1 / (4.0 * (k * k) as f64 * (m_k + r1).powi(4));
    let in_hyp = ca <= 1.0;

    let mut report = ExperimentReport::new("proof_diagnostics");
    report.value("ca", cap.value);
    report.value("x1", x1);
    report.value("x2", x2);
    report.value("independence_threshold", threshold);
    report.value("m_k", m_k);
    report.value("big_m_k", big_m_k);
    let tol = 1e-9 * (1.0 + lambda_k);
    for i in 0..k {
        for j in i..k {
            let delta = if i == j { 1.0 } else { 0.0 };
            let dm = (mass[(i, j)] - delta).abs();
            let ds = (stiff[(i, j)] - spec_base.eigenvalues[i] * delta).abs();
            let (nm, ns) = (
                format!("mass_{}_{}", i + 1, j + 1),
                format!("stiffness_{}_{}", i + 1, j + 1),
            );
            if in_hyp {
                report.push(CheckRecord::le(nm, dm, x1, tol));
                report.push(CheckRecord::le(ns, ds, x2, tol));
            } else {
                report.push(CheckRecord::not_applicable(nm, dm, x1));
                report.push(CheckRecord::not_applicable(ns, ds, x2));
            }
        }
    }
    let mass_min = mass.clone().symmetric_eigenvalues().min();
    report.value("mass_min_eigenvalue", mass_min);
    // Below the threshold the proof gives ∫f² ≥ 1 − kX₁ > 1/2 on unit
    // combinations, which is a lower bound on the smallest mass eigenvalue.
    let lower = 1.0 - k as f64 * x1;
    if in_hyp && ca < threshold {
        report.push(CheckRecord::le("independence", lower, mass_min, tol));
    } else {
        report.push(CheckRecord::not_applicable("independence", lower, mass_min));
    }
    if mass_min > 0.0 {
        // Largest Ritz value on span(ψ): an upper bound for λ_k(Ω∖A).
        let chol = mass.clone().cholesky().expect("positive definite mass");
        let linv = chol.l().try_inverse().expect("invertible factor");
        let reduced = &linv * &stiff * linv.transpose();
        let ritz = reduced.symmetric_eigenvalues().max();
        report.value("ritz_max", ritz);
        let bound = lambda_k + 4.0 * k as f64 * lambda_k * x1 + 2.0 * k as f64 * x2;
        let name = "ritz_le_final_estimate";
        if in_hyp && ca < threshold {
            report.push(CheckRecord::le(name, ritz, bound, tol));
        } else {
            report.push(CheckRecord::not_applicable(name, ritz, bound));
        }
    }
    Ok(report)
}
