//! End-to-end stability pipeline over a family of near-balls.
//!
//! Each member `Ω` gets its Hall ball `B₀`, the pieces `D₁ = B₀ ∩ Ω`,
//! `A₀ = B₀ ∖ Ω`, `Ω ∪ B₀`, the enlarged ball `B(R')` and the annulus
//! `A_{R,R'}`, and every inequality of the chain is evaluated on the discrete
//! operators. The constants `δ`, `c₄` and `τ` are evaluated from the explicit
//! terms they stand for and are flagged as reconstructed / fit-dependent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transplant::{fit_ball, transplant_constants};
use super::{eps_continuum, hall_deficit, slope_check};
use crate::bounds::{eigenvalue_comparison, spectrum_upper_report, theorem_constants};
use crate::capacity::{dirichlet_capacity, CapacityOptions};
use crate::domain::{unit_ball_volume, GridDomain, Region, SpikedBall};
use crate::error::{Error, Result};
use crate::report::{CheckRecord, ExperimentReport, Status};
use crate::spectral::{assemble, lowest_eigenpairs, ratio_bounds, SpectralData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    pub k: usize,
    /// Hall constant `c(n)`; `c₁ = c + 2n`.
    pub c_n: f64,
    /// Eigensolver tolerance.
    pub tol: f64,
    /// Overrides `c₁(n)`.
    #[serde(default)]
    pub c1_n: Option<f64>,
}

impl StabilityParams {
    pub fn c1(&self, dim: usize) -> f64 {
        self.c1_n.unwrap_or(self.c_n + 2.0 * dim as f64)
    }
}

impl Default for StabilityParams {
    fn default() -> Self {
        StabilityParams {
            k: 3,
            c_n: 0.0,
            tol: 1e-9,
            c1_n: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub member: usize,
    pub h: f64,
    pub eps: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub theta: f64,
    #[serde(rename = "Rprime")]
    pub rprime: f64,
    #[serde(rename = "Ca_A0")]
    pub ca_a0: f64,
    #[serde(rename = "Ca_annulus")]
    pub ca_annulus: f64,
    pub term_union: f64,
    #[serde(rename = "term_D1")]
    pub term_d1: f64,
    pub gaps: Vec<f64>,
    pub pass_flags: String,
}

impl StabilityRow {
    pub fn csv_header(k: usize) -> Vec<String> {
        let mut h: Vec<String> = [
            "member", "h", "eps", "F", "theta", "Rprime", "Ca_A0", "Ca_annulus", "term_union",
            "term_D1",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend((1..=k).map(|i| format!("gap_{i}")));
        h.push("pass_flags".into());
        h
    }

    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![self.member.to_string()];
        r.extend(
            [
                self.h,
                self.eps,
                self.f,
                self.theta,
                self.rprime,
                self.ca_a0,
                self.ca_annulus,
                self.term_union,
                self.term_d1,
            ]
            .iter()
            .map(|v| format!("{v:e}")),
        );
        r.extend(self.gaps.iter().map(|v| format!("{v:e}")));
        r.push(self.pass_flags.clone());
        r
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct StabilityOutput {
    pub rows: Vec<StabilityRow>,
    pub report: ExperimentReport,
}

fn region_from(domain: &GridDomain, mask: Vec<bool>) -> Result<Region> {
    Region::from_mask(domain, mask)
}

fn eig(domain: &GridDomain, k: usize, tol: f64) -> Result<SpectralData> {
    lowest_eigenpairs(&assemble(domain), k, tol)
}

fn residual_tol(specs: &[&SpectralData], i: usize) -> f64 {
    2.0 * specs.iter().map(|s| s.residuals[i]).sum::<f64>()
        + 1e-10 * specs.iter().map(|s| s.eigenvalues[i]).fold(0.0, f64::max)
}

fn run_member(idx: usize, omega: &GridDomain, p: &StabilityParams) -> Result<(StabilityRow, ExperimentReport)> {
    let k = p.k;
    let dim = omega.dim();
    let n = dim as f64;
    let h = omega.spacing();
    let vol = omega.volume();
    let mut rep = ExperimentReport::new(format!("member_{idx}"));

    let hall = hall_deficit(omega);
    let c = hall.best_center.clone();
    let r = hall.radius;
    let theta = vol - hall.overlap;

    let spec_o = eig(omega, k, p.tol)?;
    let g0 = fit_ball(omega, &c, r + h)?;
    let b0 = g0.with_mask(g0.ball_mask(&c, r)?)?;
    let spec_b0 = eig(&b0, k + 1, p.tol)?;
    let l1b = spec_b0.eigenvalues[0];
    // The digitised B₀ misses vol(Ω) by O(h/R), which is the size of ε for
    // thin spikes; rescale its λ₁ to the exact volume before comparing.
    let l_ball = l1b * (b0.volume() / vol).powf(2.0 / n);
    let eps = spec_o.eigenvalues[0] / l_ball - 1.0;
    let eps_pos = eps.max(0.0);

    let c1 = p.c1(dim);
    let c5 = 2.0 * (c1 * vol).powf(1.0 / (4.0 * n));
    let rprime = r + c5 * eps_pos.powf(1.0 / (40.0 * n));

    // Everything else lives on one grid large enough for B(R').
    let g = fit_ball(omega, &c, rprime + h)?;
    let om = g.mask().to_vec();
    let ball0 = g.ball_mask(&c, r)?;
    let ballp = g.ball_mask(&c, rprime)?;
    let union_d = g.with_mask(om.iter().zip(&ball0).map(|(a, b)| *a || *b).collect())?;
    let d1 = g.with_mask(om.iter().zip(&ball0).map(|(a, b)| *a && *b).collect())?;
    let bp = g.with_mask(ballp.clone())?;
    let a0_mask: Vec<bool> = om.iter().zip(&ball0).map(|(a, b)| *b && !*a).collect();
    let ann_mask: Vec<bool> = ballp.iter().zip(&ball0).map(|(a, b)| *a && !*b).collect();
    let bp_minus_a0 = g.with_mask(ballp.iter().zip(&a0_mask).map(|(a, b)| *a && !*b).collect())?;
    let a0 = region_from(&bp, a0_mask)?;
    let ann = region_from(&bp, ann_mask)?;
    let both = a0.union(&ann)?;

    let spec_u = eig(&union_d, k, p.tol)?;
    let spec_d1 = eig(&d1, k, p.tol)?;
    let spec_bp = eig(&bp, k.max(2), p.tol)?;
    let spec_bpa = eig(&bp_minus_a0, 1, p.tol)?;

    rep.value("vol", vol);
    rep.value("eps", eps);
    rep.value("eps_uncorrected", spec_o.eigenvalues[0] / l1b - 1.0);
    rep.value("lambda_1_ball_volume_matched", l_ball);
    rep.value("eps_continuum", eps_continuum(spec_o.eigenvalues[0], dim, vol));
    rep.value("F", hall.f);
    rep.value("theta", theta);
    rep.value("R", r);
    rep.value("Rprime", rprime);
    rep.value("c5", c5);
    for i in 0..k {
        rep.value(format!("lambda_{}_omega", i + 1), spec_o.eigenvalues[i]);
        rep.value(format!("lambda_{}_b0", i + 1), spec_b0.eigenvalues[i]);
        rep.value(format!("lambda_{}_union", i + 1), spec_u.eigenvalues[i]);
        rep.value(format!("lambda_{}_d1", i + 1), spec_d1.eigenvalues[i]);
        rep.value(format!("lambda_{}_bprime", i + 1), spec_bp.eigenvalues[i]);
    }

    // Decomposition and the min-max monotonicities behind it.
    let mut gaps = Vec::with_capacity(k);
    for i in 0..k {
        let (lo, lb, lu, ld) = (
            spec_o.eigenvalues[i],
            spec_b0.eigenvalues[i],
            spec_u.eigenvalues[i],
            spec_d1.eigenvalues[i],
        );
        let tol = residual_tol(&[&spec_o, &spec_b0, &spec_u, &spec_d1], i);
        let gap = (lo - lb).abs();
        gaps.push(gap);
        let rhs = lb - lu + 2.0 * (ld - lb);
        rep.push(CheckRecord::le(format!("decomposition_{}", i + 1), gap, rhs, 3.0 * tol));
        rep.push(CheckRecord::le(format!("union_le_b0_{}", i + 1), lu, lb, tol));
        rep.push(CheckRecord::le(format!("union_le_omega_{}", i + 1), lu, lo, tol));
        rep.push(CheckRecord::le(format!("b0_le_d1_{}", i + 1), lb, ld, tol));
        rep.push(CheckRecord::le(format!("omega_le_d1_{}", i + 1), lo, ld, tol));
    }
    let term_union = spec_b0.eigenvalues[k - 1] - spec_u.eigenvalues[k - 1];
    let term_d1 = spec_d1.eigenvalues[k - 1] - spec_b0.eigenvalues[k - 1];

    let eps_ok = eps > 0.0 && eps < 1.0;
    let gate = |name: String, lhs: f64, rhs: f64, tol: f64, ok: bool| {
        if ok {
            CheckRecord::le(name, lhs, rhs, tol)
        } else {
            CheckRecord::not_applicable(name, lhs, rhs)
        }
    };

    // Volume estimate.
    let vol_bound = c1 * vol * eps_pos.powf(0.1);
    rep.push(gate("volume_outside_b0".into(), theta, vol_bound, 1e-12 * vol, eps_ok));

    // Corollary: λ₁(B(R') ∖ A₀) ≤ λ₁(Ω) + τ.
    let tc1 = transplant_constants(1, dim, 2.0 * l1b);
    let tau = tc1.gamma * (c1 * vol).powf(1.0 / (2.0 * n)) * eps_pos.powf(1.0 / (20.0 * n));
    let rho = (tc1.kappa / (c1 * vol)).powi(10);
    rep.value("tau", tau);
    rep.value("rho", rho);
    let l1_bpa = spec_bpa.eigenvalues[0];
    let cor_tol = 2.0 * (spec_bpa.residuals[0] + spec_o.residuals[0]);
    let cor_lhs = l1_bpa;
    let cor_rhs = spec_o.eigenvalues[0] + tau;
    rep.push(gate("corollary".into(), cor_lhs, cor_rhs, cor_tol, eps_ok && eps < rho));
    let corollary_holds = cor_lhs <= cor_rhs + cor_tol;

    // Comparison step with the reconstructed transplant bump.
    let ratio2 = (rprime / r).powi(2);
    let lkb = spec_b0.eigenvalues[k - 1];
    let tck = transplant_constants(k, dim, lkb);
    let eta = lkb * (ratio2 - 1.0)
        + tck.gamma * (c1 * vol).powf(1.0 / (2.0 * n)) * eps_pos.powf(1.0 / (20.0 * n)) * ratio2;
    let mu_thresh = (tck.kappa / (c1 * vol)).powi(10);
    let scale = (lkb * lkb).max(1.0)
        * vol.powf(-3.0 / (2.0 * n)).max(vol.powf(1.0 / (2.0 * n)))
        * eps_pos.powf(1.0 / (40.0 * n));
    rep.value("eta_reconstructed", eta);
    rep.value("c4_reconstructed", if scale > 0.0 { eta / scale } else { f64::NAN });
    let mu: Vec<f64> = spec_b0.eigenvalues[..=k].to_vec();
    let lam: Vec<f64> = (0..k)
        .map(|i| spec_u.eigenvalues[i].min(mu[i]))
        .collect();
    let cmp = eigenvalue_comparison(&mu, &lam, eta, k)?;
    rep.value("c_k_plus_1", cmp.c[k]);
    for i in 0..k {
        let tol = residual_tol(&[&spec_b0, &spec_u], i);
        rep.push(gate(
            format!("comparison_{}", i + 1),
            mu[i],
            spec_u.eigenvalues[i] + cmp.c[k] * eta,
            tol,
            cmp.hypothesis_met && eps_ok && eps < mu_thresh,
        ));
    }

    // Capacities on B(R').
    let opts = CapacityOptions::default();
    let ratios = ratio_bounds(&spec_bp, &bp, k, 1)?;
    let consts = theorem_constants(&spec_bp, &ratios, k)?;
    let ca_ann = dirichlet_capacity(&bp, &ann, &spec_bp, &opts)?;
    let ca_a0 = dirichlet_capacity(&bp, &a0, &spec_bp, &opts)?;
    let ca_both = dirichlet_capacity(&bp, &both, &spec_bp, &opts)?;
    let l1p = spec_bp.eigenvalues[0];
    let ca_tol = 1e-8 + 1e-8 * ca_both.value.max(ca_ann.value + ca_a0.value);
    rep.value("B1_bprime", consts.b1);
    rep.value("Ca_union", ca_both.value);
    rep.push(CheckRecord::le(
        "subadditivity",
        ca_both.value,
        ca_ann.value + ca_a0.value,
        ca_tol,
    ));
    let lam_tol = 2.0 * consts.b1 * (spec_b0.residuals[0] + spec_bp.residuals[0]) + ca_tol;
    rep.push(CheckRecord::le(
        "annulus_capacity",
        ca_ann.value,
        consts.b1 * (l1b - l1p),
        lam_tol,
    ));
    rep.value("annulus_capacity_continuum_rhs", consts.b1 * l1b * (1.0 - 1.0 / ratio2));
    let a0_tol = 2.0 * consts.b1 * (spec_bpa.residuals[0] + spec_bp.residuals[0]) + ca_tol;
    rep.push(CheckRecord::le("a0_capacity", ca_a0.value, consts.b1 * (l1_bpa - l1p), a0_tol));
    // δ ε^{1/40n}: the B₁-weighted explicit terms (ε λ₁(B), τ, λ₁(B) − λ₁(B(R'))),
    // with λ₁(Ω) = (1 + ε) λ₁(B).
    let delta_eps = consts.b1 * (eps_pos * l_ball + tau + (l_ball - l1p));
    let e40 = eps_pos.powf(1.0 / (40.0 * n));
    let delta = if e40 > 0.0 { delta_eps / e40 } else { f64::NAN };
    rep.value("delta_reconstructed", delta);
    rep.push(gate("a0_capacity_delta".into(), ca_a0.value, delta_eps, a0_tol, corollary_holds));
    // 1 − (R/R')² against its ε-power bound.
    let w = unit_ball_volume(dim);
    let shrink = 1.0 - 1.0 / ratio2;
    let derived = 4.0 * (c1 * w.powi(4)).powf(1.0 / (4.0 * n)) * vol.powf(-3.0 / (4.0 * n)) * e40;
    let displayed = 4.0 * (c1 / w.powi(4)).powf(1.0 / (4.0 * n)) * vol.powf(-3.0 / (4.0 * n)) * e40;
    rep.value("radius_shrink", shrink);
    rep.value("radius_shrink_bound_displayed", displayed);
    rep.push(CheckRecord::le("radius_shrink", shrink, derived, 1e-12));
    // λ_k(D₁) − λ_k(B₀) ≤ λ_k(D₁) − λ_k(B(R')) ≤ C_k Ca^{1/2}(A_{R,R'} ∪ A₀).
    for i in 0..k {
        let tol = residual_tol(&[&spec_bp, &spec_b0], i);
        rep.push(CheckRecord::le(
            format!("bprime_le_b0_{}", i + 1),
            spec_bp.eigenvalues[i],
            spec_b0.eigenvalues[i],
            tol,
        ));
    }
    let upper = spectrum_upper_report(&ca_both, &spec_bp, &spec_d1, &consts, k)?;
    rep.extend(upper);
    let final_rhs = consts.c[k - 1] * delta_eps.max(0.0).sqrt();
    rep.push(gate(
        "d1_term_final".into(),
        term_d1,
        final_rhs,
        residual_tol(&[&spec_d1, &spec_b0], k - 1),
        corollary_holds && delta_eps < consts.eps[k - 1],
    ));

    let flags = format!(
        "pass={};fail={};hnm={}",
        rep.count(Status::Pass),
        rep.count(Status::Fail),
        rep.count(Status::HypothesisNotMet)
    );
    let row = StabilityRow {
        member: idx,
        h,
        eps,
        f: hall.f,
        theta,
        rprime,
        ca_a0: ca_a0.value,
        ca_annulus: ca_ann.value,
        term_union,
        term_d1,
        gaps,
        pass_flags: flags,
    };
    Ok((row, rep))
}

/// Spiked balls with the given spike widths, each rescaled to the volume of
/// the first member times `scale^n`.
pub fn spiked_ball_family(
    base: &SpikedBall,
    widths: &[f64],
    scale: f64,
) -> Result<Vec<GridDomain>> {
    if widths.is_empty() || !(scale > 0.0) {
        return Err(Error::InvalidParameter(
            "need at least one spike width and a positive scale".into(),
        ));
    }
    let mut out = Vec::with_capacity(widths.len());
    let mut target = None;
    for &w in widths {
        let d = SpikedBall { spike_width: w, ..base.clone() }.build()?;
        let v0 = *target.get_or_insert(d.volume());
        let f = (v0 / d.volume()).powf(1.0 / d.dim() as f64) * scale;
        out.push(d.rescaled(f)?);
    }
    Ok(out)
}

/// Runs the pipeline on every member (concurrently) and adds the
/// family-level trend checks.
pub fn stability_experiment(family: &[GridDomain], params: &StabilityParams) -> Result<StabilityOutput> {
    if family.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "a trend needs at least 3 members, got {}",
            family.len()
        )));
    }
    if params.k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if let Some(d) = family.iter().find(|d| d.dim() < 3) {
        return Err(Error::InvalidParameter(format!(
            "the stability pipeline needs n >= 3, got a {}-dimensional member",
            d.dim()
        )));
    }
    let vols: Vec<f64> = family.iter().map(|d| d.volume()).collect();
    let (vmin, vmax) = vols
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if vmax > 1.05 * vmin {
        return Err(Error::InvalidParameter(format!(
            "member volumes differ by more than 5% ({vmin} .. {vmax})"
        )));
    }
    let results: Vec<Result<(StabilityRow, ExperimentReport)>> = family
        .par_iter()
        .enumerate()
        .map(|(i, d)| run_member(i, d, params))
        .collect();
    let mut report = ExperimentReport::new("stability");
    let mut rows = Vec::with_capacity(family.len());
    for res in results {
        let (row, rep) = res?;
        report.extend(rep);
        rows.push(row);
    }

    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.max_gap()).collect();
    let spread = eps.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = eps.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    report.value("gap_reduction", gaps[0] / gaps[gaps.len() - 1]);
    if spread <= 1e-9 * scale.max(1e-300) {
        report.note("no trend: eps is constant across the family");
        for j in 1..rows.len() {
            report.push(CheckRecord::not_applicable(
                format!("gap_trend_{j}"),
                gaps[j],
                gaps[j - 1],
            ));
        }
        return Ok(StabilityOutput { rows, report });
    }
    for j in 1..rows.len() {
        let strict = if eps[j] < eps[j - 1] { Status::Pass } else { Status::Fail };
        let mut rec = CheckRecord::le(format!("eps_decreasing_{j}"), eps[j], eps[j - 1], 0.0);
        rec.status = strict;
        report.push(rec);
        // "Up to noise": a 5% relative allowance plus solver noise.
        report.push(CheckRecord::le(
            format!("gap_trend_{j}"),
            gaps[j],
            gaps[j - 1],
            0.05 * gaps[j - 1] + 1e-8,
        ));
    }
    let n = family[0].dim() as f64;
    let theta: Vec<f64> = rows.iter().map(|r| r.theta).collect();
    let ca0: Vec<f64> = rows.iter().map(|r| r.ca_a0).collect();
    report.push(slope_check("slope_volume", &eps, &theta, 0.1, 0.0));
    report.push(slope_check("slope_ca_a0", &eps, &ca0, 1.0 / (40.0 * n), 0.0));
    report.push(slope_check("slope_gap", &eps, &gaps, 1.0 / (80.0 * n), 0.0));
    Ok(StabilityOutput { rows, report })
}
