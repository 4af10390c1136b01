//! Dirichlet and electrostatic capacities of excision regions.
//!
//! Both are discrete harmonic extensions: the potential is prescribed on the
//! cells of `A ∩ Ω` (the ground state `φ₁` for the Dirichlet capacity, the
//! constant 1 for the electrostatic one), vanishes outside `Ω` and is
//! harmonic on the remaining cells. The capacity is its Dirichlet energy.

use serde::Serialize;

use crate::domain::{excise, GridDomain, Region};
use crate::error::{Error, Result};
use crate::linalg::{pcg, Amg, PcgOptions};
use crate::report::{CheckRecord, ExperimentReport};
use crate::spectral::{assemble, SpectralData};

#[derive(Clone, Copy, Debug)]
pub struct CapacityOptions {
    /// Relative residual of the linear solve.
    pub tol: f64,
    pub max_iter: usize,
    /// Constrain the one-cell face dilation of the region instead of the
    /// region itself.
    pub dilate: bool,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        CapacityOptions {
            tol: 1e-10,
            max_iter: 1000,
            dilate: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CapacityResult {
    pub value: f64,
    /// Minimising potential over the active cells of `Ω`, in DOF order.
    pub potential: Vec<f64>,
    /// Relative residual of the linear solve (0 when nothing was solved).
    pub residual: f64,
    pub iterations: usize,
    pub region_id: String,
    pub domain_id: String,
}

#[derive(Serialize)]
struct CapacityRecord<'a> {
    value: f64,
    residual: f64,
    region_id: &'a str,
    domain_id: &'a str,
}

impl CapacityResult {
    /// `{value, residual, region_id, domain_id}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CapacityRecord {
            value: self.value,
            residual: self.residual,
            region_id: &self.region_id,
            domain_id: &self.domain_id,
        })
        .expect("record serialises")
    }
}

/// Dirichlet energy `∑_faces (f_p - f_q)² h^{dim-2}` of a function given on
/// the active cells of `domain` and extended by zero, evaluated face by face.
pub fn dirichlet_energy(domain: &GridDomain, f: &[f64]) -> f64 {
    let dof = domain.dof_map();
    let hpow = domain.spacing().powi(domain.dim() as i32 - 2);
    let mut acc = 0.0;
    for i in domain.active_indices() {
        let fi = f[dof[i]];
        domain.for_each_neighbor(i, |_, j| {
            if domain.is_active(j) {
                // Interior faces are visited from both sides.
                if j > i {
                    let d = fi - f[dof[j]];
                    acc += d * d;
                }
            } else {
                acc += fi * fi;
            }
        });
    }
    acc * hpow
}

fn constrained_cells(domain: &GridDomain, region: &Region, dilate: bool) -> Result<Region> {
    region.check_grid(domain)?;
    if dilate {
        region.dilated(domain)
    } else {
        Ok(region.clone())
    }
}

/// Harmonic extension of `data` from the constrained cells of `Ω`.
fn harmonic_extension(
    domain: &GridDomain,
    fixed: &Region,
    data: impl Fn(usize) -> f64,
    opts: &CapacityOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    let dof = domain.dof_map();
    let n = domain.active_count();
    let mut f = vec![0.0; n];
    for i in domain.active_indices() {
        if fixed.mask()[i] {
            f[dof[i]] = data(dof[i]);
        }
    }
    let free = match excise(domain, fixed) {
        Ok(d) => d,
        Err(Error::EmptyDomain(_)) => return Ok((f, 0.0, 0)),
        Err(e) => return Err(e),
    };
    let op = assemble(&free);
    let free_dof = free.dof_map();
    let h2 = domain.spacing() * domain.spacing();
    let free_cells = free.active_indices();
    let mut b = vec![0.0; free_cells.len()];
    for (r, &i) in free_cells.iter().enumerate() {
        let mut s = 0.0;
        domain.for_each_neighbor(i, |_, j| {
            if domain.is_active(j) && fixed.mask()[j] {
                s += f[dof[j]];
            }
        });
        b[r] = s / h2;
    }
    let amg = Amg::new(op.matrix())?;
    let sol = pcg(
        op.matrix(),
        &amg,
        &b,
        None,
        &PcgOptions::new(opts.tol, opts.max_iter),
    )?;
    for &i in &free_cells {
        f[dof[i]] = sol.x[free_dof[i]];
    }
    Ok((f, sol.relative_residual, sol.iterations))
}

/// `Ca(A)`: least Dirichlet energy of functions equal to `φ₁` on `A ∩ Ω` and
/// vanishing outside `Ω`.
pub fn dirichlet_capacity(
    domain: &GridDomain,
    region: &Region,
    spec: &SpectralData,
    opts: &CapacityOptions,
) -> Result<CapacityResult> {
    if spec.domain_id != domain.id() {
        return Err(Error::InvalidParameter(format!(
            "spectral data belongs to domain {} but the capacity domain is {}",
            spec.domain_id,
            domain.id()
        )));
    }
    let fixed = constrained_cells(domain, region, opts.dilate)?;
    let phi1 = spec.ground_state();
    let (potential, residual, iterations) =
        harmonic_extension(domain, &fixed, |d| phi1[d], opts)?;
    Ok(CapacityResult {
        value: dirichlet_energy(domain, &potential),
        potential,
        residual,
        iterations,
        region_id: region.id(),
        domain_id: domain.id(),
    })
}

/// Classical capacity: boundary value 1 on `A ∩ Ω`.
pub fn electrostatic_capacity(
    domain: &GridDomain,
    region: &Region,
    opts: &CapacityOptions,
) -> Result<CapacityResult> {
    let fixed = constrained_cells(domain, region, opts.dilate)?;
    let (potential, residual, iterations) = harmonic_extension(domain, &fixed, |_| 1.0, opts)?;
    Ok(CapacityResult {
        value: dirichlet_energy(domain, &potential),
        potential,
        residual,
        iterations,
        region_id: region.id(),
        domain_id: domain.id(),
    })
}

/// Absolute slack used when comparing capacities from independent solves.
fn capacity_tolerance(values: &[f64]) -> f64 {
    1e-8 + 1e-8 * values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Monotonicity along a nested sequence of regions, and approach to the
/// capacity of `limit` (the union of an increasing sequence or the
/// intersection of a decreasing one; defaults to the last member).
pub fn verify_choquet(
    domain: &GridDomain,
    spec: &SpectralData,
    regions: &[Region],
    limit: Option<&Region>,
    opts: &CapacityOptions,
) -> Result<ExperimentReport> {
    if regions.len() < 3 {
        return Err(Error::InvalidParameter(
            "at least three nested regions are required".into(),
        ));
    }
    let increasing = regions.windows(2).all(|w| w[0].is_subset_of(&w[1]));
    let decreasing = regions.windows(2).all(|w| w[1].is_subset_of(&w[0]));
    if !increasing && !decreasing {
        return Err(Error::InvalidParameter("regions are not nested".into()));
    }
    if let Some(l) = limit {
        let ok = if increasing {
            regions.iter().all(|r| r.is_subset_of(l))
        } else {
            regions.iter().all(|r| l.is_subset_of(r))
        };
        if !ok {
            return Err(Error::InvalidParameter(
                "limit region is not the union/intersection bound of the sequence".into(),
            ));
        }
    }
    let caps: Vec<f64> = regions
        .iter()
        .map(|r| dirichlet_capacity(domain, r, spec, opts).map(|c| c.value))
        .collect::<Result<_>>()?;
    let cap_limit = match limit {
        Some(l) => dirichlet_capacity(domain, l, spec, opts)?.value,
        None => *caps.last().expect("non-empty"),
    };
    let mut all = caps.clone();
    all.push(cap_limit);
    let tol = capacity_tolerance(&all);
    let mut report = ExperimentReport::new("choquet");
    report.value("ca_limit", cap_limit);
    for (i, c) in caps.iter().enumerate() {
        report.value(format!("ca_{i}"), *c);
    }
    for (i, w) in caps.windows(2).enumerate() {
        let (lhs, rhs) = if increasing { (w[0], w[1]) } else { (w[1], w[0]) };
        report.push(CheckRecord::le(format!("monotone_{i}"), lhs, rhs, tol));
    }
    for (i, c) in caps.iter().enumerate() {
        let (lhs, rhs) = if increasing { (*c, cap_limit) } else { (cap_limit, *c) };
        report.push(CheckRecord::le(format!("bounded_by_limit_{i}"), lhs, rhs, tol));
    }
    let gaps: Vec<f64> = caps.iter().map(|c| (c - cap_limit).abs()).collect();
    for (i, w) in gaps.windows(2).enumerate() {
        report.push(CheckRecord::le(format!("approach_{i}"), w[1], w[0], tol));
    }
    Ok(report)
}

/// `Ca(A ∪ B) ≤ Ca(A) + Ca(B)`, together with the barrier `max(f_A, f_B)`
/// used in its proof: it is admissible for `A ∪ B` and its energy is at most
/// the sum of the two energies.
pub fn verify_subadditivity(
    domain: &GridDomain,
    spec: &SpectralData,
    a: &Region,
    b: &Region,
    opts: &CapacityOptions,
) -> Result<ExperimentReport> {
    let union = a.union(b)?;
    let ca = dirichlet_capacity(domain, a, spec, opts)?;
    let cb = dirichlet_capacity(domain, b, spec, opts)?;
    let cu = dirichlet_capacity(domain, &union, spec, opts)?;
    let tol = capacity_tolerance(&[ca.value, cb.value, cu.value]);
    let mut report = ExperimentReport::new("subadditivity");
    report.value("ca_a", ca.value);
    report.value("ca_b", cb.value);
    report.value("ca_union", cu.value);
    report.push(CheckRecord::le("subadditive", cu.value, ca.value + cb.value, tol));

    let phi1 = spec.ground_state();
    let dof = domain.dof_map();
    let mut barrier: Vec<f64> = ca
        .potential
        .iter()
        .zip(&cb.potential)
        .map(|(x, y)| x.max(*y))
        .collect();
    // Admissibility: the barrier already equals φ₁ on the constrained cells
    // up to the barrier inequality f ≤ φ₁; record the defect, then pin it.
    let fixed = constrained_cells(domain, &union, opts.dilate)?;
    let mut defect = 0.0f64;
    for i in domain.active_indices() {
        if fixed.mask()[i] {
            let d = dof[i];
            defect = defect.max((barrier[d] - phi1[d]).abs());
            barrier[d] = phi1[d];
        }
    }
    let e_barrier = dirichlet_energy(domain, &barrier);
    report.push(CheckRecord::le("barrier_admissible", defect, 0.0, 1e-8));
    report.push(CheckRecord::le("barrier_minimality", cu.value, e_barrier, tol));
    report.push(CheckRecord::le(
        "barrier_energy",
        e_barrier,
        ca.value + cb.value,
        tol,
    ));
    Ok(report)
}
