//! Cut-off transplantation of the eigenfunctions of a domain that nearly
//! fits in a ball `B₀` onto `B' = B(R') ∖ (B₀ ∩ Ω̂ᶜ)`.

use serde::{Deserialize, Serialize};

use super::{radial_cutoff, unit_ball_lambda1, Ball};
use crate::bounds::{a_sequence, q_gram_schmidt_unchecked, LemmaGSResult};
use crate::domain::{unit_ball_volume, GridDomain};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::report::{CheckRecord, ExperimentReport};
use crate::spectral::{assemble, SpectralData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransplantConstants {
    /// `λ₁(B(1)) w_n^{2/n}`.
    pub c2: f64,
    /// `c(k,n) = (8/c₂ + 1) max{λ_k, 1}`.
    pub c_kn: f64,
    /// `(1/(4 a_k c(k,n)))^{2n}`.
    pub kappa: f64,
    /// `(8/c₂ + 1) 14 k a_k max{λ_k², 1}`.
    pub gamma: f64,
    pub a_k: f64,
}

pub fn transplant_constants(k: usize, dim: usize, lambda_k: f64) -> TransplantConstants {
    let n = dim as f64;
    let c2 = unit_ball_lambda1(dim) * unit_ball_volume(dim).powf(2.0 / n);
    let a_k = a_sequence(k)[k - 1];
    let base = 8.0 / c2 + 1.0;
    let c_kn = base * lambda_k.max(1.0);
    TransplantConstants {
        c2,
        c_kn,
        kappa: (1.0 / (4.0 * a_k * c_kn)).powf(2.0 * n),
        gamma: base * 14.0 * k as f64 * a_k * (lambda_k * lambda_k).max(1.0),
        a_k,
    }
}

#[derive(Clone, Debug)]
pub struct TransplantResult {
    pub rprime: f64,
    /// `vol(Ω̂ ∖ B₀)` counted in cells.
    pub theta: f64,
    /// `α = β = θ^{1/4n}`.
    pub alpha: f64,
    pub constants: TransplantConstants,
    /// `∫|∇F_i|²` of the orthonormalised family.
    pub test_energies: Vec<f64>,
    /// `λ_i(Ω̂) + γ θ^{1/2n}`.
    pub target_bounds: Vec<f64>,
    /// `θ < κ` and `θ < 1`.
    pub hypothesis_met: bool,
    /// The family `F_i` in the DOF order of `bprime_domain`.
    pub functions: Vec<Vec<f64>>,
    pub gram_schmidt: LemmaGSResult,
    pub bprime_domain: GridDomain,
    pub report: ExperimentReport,
}

impl TransplantResult {
    /// Smallest `target_bound − energy`.
    pub fn slack(&self) -> f64 {
        self.test_energies
            .iter()
            .zip(&self.target_bounds)
            .map(|(e, b)| b - e)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Pads `domain` until the ball fits; returns the padded domain.
pub(crate) fn fit_ball(domain: &GridDomain, center: &[f64], radius: f64) -> Result<GridDomain> {
    match domain.ball_mask(center, radius) {
        Ok(_) => Ok(domain.clone()),
        Err(Error::OutOfGrid { required_padding }) => domain.padded(required_padding + 1),
        Err(e) => Err(e),
    }
}

pub fn transplant(
    domain_hat: &GridDomain,
    b0: &Ball,
    k: usize,
    spec_hat: &SpectralData,
) -> Result<TransplantResult> {
    if spec_hat.domain_id != domain_hat.id() {
        return Err(Error::InvalidParameter(
            "spectrum does not belong to the transplanted domain".into(),
        ));
    }
    if k == 0 || k > spec_hat.k() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} but {} eigenpairs are available",
            spec_hat.k()
        )));
    }
    let dim = domain_hat.dim();
    if b0.center.len() != dim || !(b0.radius > 0.0) {
        return Err(Error::InvalidParameter("malformed ball".into()));
    }
    let n = dim as f64;
    let r = b0.radius;
    let h = domain_hat.spacing();
    let vol_cell = domain_hat.cell_volume();
    let outside = domain_hat
        .active_indices()
        .into_iter()
        .filter(|&i| b0.distance(&domain_hat.cell_center(i)[..dim]) >= r)
        .count();
    let theta = outside as f64 * vol_cell;
    let alpha = theta.powf(1.0 / (4.0 * n));
    let rprime = r + 2.0 * alpha;
    let lambdas = &spec_hat.eigenvalues[..k];
    let consts = transplant_constants(k, dim, lambdas[k - 1]);
    let hypothesis_met = theta < consts.kappa && theta < 1.0;

    // DOF order survives padding, so the eigenvectors stay valid.
    let hat = fit_ball(domain_hat, &b0.center, rprime + h)?;
    let big = hat.ball_mask(&b0.center, rprime)?;
    let core = hat.ball_mask(&b0.center, r)?;
    let bmask: Vec<bool> = (0..hat.n_cells())
        .map(|i| big[i] && (!core[i] || hat.is_active(i)))
        .collect();
    let bprime = hat.with_mask(bmask)?;
    let bdof = bprime.dof_map();

    let n_b = bprime.active_count();
    let mut psi = vec![vec![0.0; n_b]; k];
    for (d, i) in hat.active_indices().into_iter().enumerate() {
        let rad = b0.distance(&hat.cell_center(i)[..dim]);
        let chi = if alpha > 0.0 {
            radial_cutoff(r + alpha, r + 2.0 * alpha, rad)
        } else if rad <= r {
            1.0
        } else {
            0.0
        };
        if chi == 0.0 {
            continue;
        }
        let bd = bdof[i];
        debug_assert!(bd != usize::MAX, "cutoff support leaves B'");
        for (p, phi) in psi.iter_mut().zip(&spec_hat.eigenfunctions) {
            p[bd] = chi * phi[d];
        }
    }

    let op = assemble(&bprime);
    let inner = |x: &[f64], y: &[f64]| vol_cell * dot(x, y);
    let q = |x: &[f64]| op.energy(x);
    let c_gs = consts.c_kn * theta.powf(1.0 / (2.0 * n));

    let mut report = ExperimentReport::new("transplant");
    report.value("theta", theta);
    report.value("kappa", consts.kappa);
    report.value("gamma", consts.gamma);
    report.value("c_kn", consts.c_kn);
    report.value("c2", consts.c2);
    report.value("Rprime", rprime);
    // Intermediate estimates for the cut-off family, before orthonormalising.
    let mut gram_dev = 0.0f64;
    for i in 0..k {
        for j in i..k {
            let delta = if i == j { 1.0 } else { 0.0 };
            gram_dev = gram_dev.max((inner(&psi[i], &psi[j]) - delta).abs());
        }
    }
    let energy_dev = (0..k)
        .map(|i| q(&psi[i]) - lambdas[i])
        .fold(f64::NEG_INFINITY, f64::max);
    report.value("psi_gram_deviation", gram_dev);
    report.value("psi_energy_excess", energy_dev);
    let tol = 1e-9 * (1.0 + lambdas[k - 1]);
    for (name, lhs) in [("psi_gram", gram_dev), ("psi_energy", energy_dev)] {
        report.push(if hypothesis_met {
            CheckRecord::le(name, lhs, c_gs, tol)
        } else {
            CheckRecord::not_applicable(name, lhs, c_gs)
        });
    }

    let gs = q_gram_schmidt_unchecked(&psi, &inner, &q, c_gs, lambdas)?;
    for v in &gs.violations {
        report.note(format!("Gram-Schmidt hypothesis: {v}"));
    }
    let bump = consts.gamma * theta.powf(1.0 / (2.0 * n));
    let target: Vec<f64> = lambdas.iter().map(|l| l + bump).collect();
    for i in 0..k {
        let name = format!("energy_{}", i + 1);
        report.push(if hypothesis_met {
            CheckRecord::le(name, gs.q_values[i], target[i], tol)
        } else {
            CheckRecord::not_applicable(name, gs.q_values[i], target[i])
        });
    }
    report.push(CheckRecord::le("orthonormal", gs.orthonormality_defect, 1e-10, 0.0));
    if !hypothesis_met {
        report.note(format!(
            "hypothesis not met: theta = {theta:e}, kappa = {:e}",
            consts.kappa
        ));
    }
    Ok(TransplantResult {
        rprime,
        theta,
        alpha,
        constants: consts,
        test_energies: gs.q_values.clone(),
        target_bounds: target,
        hypothesis_met,
        functions: gs.basis.clone(),
        gram_schmidt: gs,
        bprime_domain: bprime,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_ball, SpikedBall};
    use crate::faberkrahn::hall_deficit;
    use crate::spectral::lowest_eigenpairs;

    #[test]
    fn identity_case() {
        let d = make_ball(3, 1.0, 1.0 / 12.0).unwrap();
        let spec = lowest_eigenpairs(&assemble(&d), 2, 1e-10).unwrap();
        let b0 = Ball {
            center: vec![0.0; 3],
            radius: 1.0,
        };
        let t = transplant(&d, &b0, 2, &spec).unwrap();
        assert_eq!(t.theta, 0.0);
        assert_eq!(t.rprime, 1.0);
        for i in 0..2 {
            let rel = (t.test_energies[i] - spec.eigenvalues[i]).abs() / spec.eigenvalues[i];
            assert!(rel < 1e-8, "{rel}");
        }
        assert!(t.hypothesis_met);
        assert!(t.report.all_passed(), "{:?}", t.report);
    }

    #[test]
    fn constants_by_substitution() {
        let c = transplant_constants(1, 3, 0.5);
        let c2 = std::f64::consts::PI.powi(2) * (4.0 * std::f64::consts::PI / 3.0).powf(2.0 / 3.0);
        assert!((c.c2 - c2).abs() < 1e-12);
        assert!((c.c_kn - (8.0 / c2 + 1.0)).abs() < 1e-12);
        assert!((c.kappa - (1.0 / (4.0 * c.c_kn)).powi(6)).abs() < 1e-18);
        assert!((c.gamma - (8.0 / c2 + 1.0) * 14.0).abs() < 1e-12);
    }

    #[test]
    fn spiked_ball_energy_bound() {
        let sb = SpikedBall::new(3, 1.0, 0.6, 0.3, 1.0 / 12.0);
        let d = sb.build().unwrap();
        let hall = hall_deficit(&d);
        let spec = lowest_eigenpairs(&assemble(&d), 1, 1e-9).unwrap();
        let t = transplant(&d, &hall.ball(), 1, &spec).unwrap();
        assert!(t.theta > 0.0 && !t.hypothesis_met);
        assert!(t.slack() > 0.0);
        assert!(t.gram_schmidt.orthonormality_defect < 1e-10);
        // Each F_i vanishes outside B'.
        assert_eq!(t.functions[0].len(), t.bprime_domain.active_count());
    }
}
