//! Dispatch of the seven experiment commands.

use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use serde_json::{json, Value};

use caplab_core::bounds::{
    capacity_lower_report, lemma_suite, proof_diagnostics, spectrum_upper_report,
    theorem_constants, TheoremConstants,
};
use caplab_core::capacity::{
    dirichlet_capacity, electrostatic_capacity, verify_subadditivity, CapacityOptions,
};
use caplab_core::convergence::{observed_order, MIN_ORDER};
use caplab_core::domain::{excise, GridDomain, Region};
use caplab_core::faberkrahn::{
    eps_continuum, faber_krahn_check, fit_hall_constant, hall_deficit, isoperimetric_check,
    spiked_ball_family, stability_experiment, transplant, volume_bound_check, StabilityParams,
    StabilityRow,
};
use caplab_core::report::{CheckRecord, ExperimentReport, Status};
use caplab_core::spectral::{assemble, lowest_eigenpairs, ratio_bounds, SpectralData};

use crate::config::{Command, ExperimentConfig, FkMode, Quantity, RegionSpec};
use crate::output::{num, status_str, MeshStats, Table};
use crate::svg::{Plot, Series};

/// Everything a run produces before anything is written.
pub struct RunResult {
    pub report: ExperimentReport,
    pub data: Value,
    pub table: Table,
    pub plot: Option<Plot>,
    pub meshes: Vec<MeshStats>,
    pub sidecar: Option<Vec<u8>>,
    pub timings: Vec<(String, f64)>,
}

impl RunResult {
    fn new(title: &str) -> Self {
        RunResult {
            report: ExperimentReport::new(title),
            data: Value::Null,
            table: Table::default(),
            plot: None,
            meshes: Vec::new(),
            sidecar: None,
            timings: Vec::new(),
        }
    }

    fn time<T>(&mut self, stage: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push((stage.into(), t.elapsed().as_secs_f64()));
        out
    }
}

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    match cfg.command {
        Command::Spectrum => spectrum(cfg),
        Command::Capacity => capacity(cfg),
        Command::TheoremCheck => theorem_check(cfg),
        Command::ProofDiagnostics => diagnostics(cfg),
        Command::FaberKrahn => faber_krahn(cfg),
        Command::LemmaSuite => lemmas(cfg),
        Command::ConvergenceStudy => convergence(cfg),
    }
}

fn domain(cfg: &ExperimentConfig, h: f64) -> anyhow::Result<GridDomain> {
    let g = cfg.geometry.as_ref().expect("validated");
    g.build(h, cfg.seed)
        .with_context(|| format!("building {} at h = {h}", g.label()))
}

fn eig(d: &GridDomain, k: usize, tol: f64) -> caplab_core::Result<SpectralData> {
    lowest_eigenpairs(&assemble(d), k, tol)
}

fn cap_opts(cfg: &ExperimentConfig) -> CapacityOptions {
    CapacityOptions {
        tol: cfg.tolerances.capacity,
        ..Default::default()
    }
}

fn spectrum(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("spectrum");
    let d = domain(cfg, cfg.h())?;
    let tol = cfg.tolerances.eigen;
    out.meshes.push(MeshStats::of("omega", &d));
    let spec = out.time("eigensolve", || eig(&d, cfg.k, tol))?;
    out.table = Table::new(["index", "eigenvalue", "residual"]);
    for (i, (&l, &r)) in spec.eigenvalues.iter().zip(&spec.residuals).enumerate() {
        out.report.value(format!("lambda_{}", i + 1), l);
        out.report
            .push(CheckRecord::le(format!("residual_{}", i + 1), r, tol * l, 0.0));
        out.table.push(vec![(i + 1).to_string(), num(l), num(r)]);
    }
    out.data = spec.to_json();
    if cfg.output.sidecar {
        out.sidecar = Some(spec.sidecar());
    }
    Ok(out)
}

fn regions(cfg: &ExperimentConfig, d: &GridDomain) -> anyhow::Result<Vec<Region>> {
    cfg.holes
        .iter()
        .enumerate()
        .map(|(j, r)| r.build(d).with_context(|| format!("holes[{j}]")))
        .collect()
}

fn capacity(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("capacity");
    let d = domain(cfg, cfg.h())?;
    out.meshes.push(MeshStats::of("omega", &d));
    let spec = out.time("eigensolve", || eig(&d, 1, cfg.tolerances.eigen))?;
    let regs = regions(cfg, &d)?;
    let opts = cap_opts(cfg);
    let t = Instant::now();
    let caps = regs
        .par_iter()
        .map(|a| {
            let dc = dirichlet_capacity(&d, a, &spec, &opts)?;
            let ec = electrostatic_capacity(&d, a, &opts)?;
            Ok((dc, ec))
        })
        .collect::<caplab_core::Result<Vec<_>>>()?;
    out.timings.push(("capacities".into(), t.elapsed().as_secs_f64()));
    let phi1 = spec.ground_state();
    out.table = Table::new([
        "region",
        "Ca",
        "Ca_electrostatic",
        "residual",
        "residual_electrostatic",
        "max_excess_over_phi1",
    ]);
    let mut rows = Vec::new();
    for (j, ((dc, ec), spec_r)) in caps.iter().zip(&cfg.holes).enumerate() {
        let excess = dc
            .potential
            .iter()
            .zip(phi1)
            .map(|(f, p)| f - p)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        let below = dc.potential.iter().cloned().fold(0.0f64, f64::min);
        let mut r = ExperimentReport::new(format!("hole_{j}"));
        r.value("Ca", dc.value);
        r.value("Ca_electrostatic", ec.value);
        r.push(CheckRecord::le("potential_le_phi1", excess, 0.0, 1e-8));
        r.push(CheckRecord::le("potential_nonnegative", -below, 0.0, 1e-8));
        out.report.extend(r);
        out.table.push(vec![
            spec_r.label(),
            num(dc.value),
            num(ec.value),
            num(dc.residual),
            num(ec.residual),
            num(excess),
        ]);
        rows.push(json!({
            "region": spec_r.label(),
            "dirichlet": dc.to_json(),
            "electrostatic": ec.to_json(),
        }));
    }
    for j in 1..regs.len() {
        let mut r = verify_subadditivity(&d, &spec, &regs[j - 1], &regs[j], &opts)?;
        r.title = format!("subadditivity_{}_{j}", j - 1);
        out.report.extend(r);
    }
    if regs.len() >= 2 {
        let idx = |f: &dyn Fn(usize) -> f64| (0..caps.len()).map(|j| ((j + 1) as f64, f(j))).collect();
        out.plot = Some(Plot {
            title: "Capacities along the region sequence".into(),
            x_label: "region index".into(),
            y_label: "capacity".into(),
            log_x: false,
            log_y: true,
            series: vec![
                Series {
                    name: "Dirichlet".into(),
                    points: idx(&|j| caps[j].0.value),
                },
                Series {
                    name: "electrostatic".into(),
                    points: idx(&|j| caps[j].1.value),
                },
            ],
        });
    }
    out.data = json!({ "ground_state": spec.to_json(), "regions": rows });
    Ok(out)
}

struct Base {
    d: GridDomain,
    spec: SpectralData,
    consts: TheoremConstants,
    ratios: caplab_core::spectral::RatioBounds,
}

/// Base spectrum with one pair beyond `k`, ratio bounds and theorem constants.
fn base(cfg: &ExperimentConfig, out: &mut RunResult) -> anyhow::Result<Base> {
    let d = domain(cfg, cfg.h())?;
    out.meshes.push(MeshStats::of("omega", &d));
    let k = cfg.k;
    let spec = out.time("eigensolve", || eig(&d, k.max(2) + 1, cfg.tolerances.eigen))?;
    let ratios = ratio_bounds(&spec, &d, k, cfg.margin)?;
    let consts = theorem_constants(&spec, &ratios, k)?;
    let r = &mut out.report;
    r.value("B1", consts.b1);
    for i in 0..k {
        r.value(format!("lambda_{}", i + 1), spec.eigenvalues[i]);
        r.value(format!("eps_{}", i + 1), consts.eps[i]);
        r.value(format!("C_{}", i + 1), consts.c[i]);
        r.value(format!("m_{}", i + 1), consts.m[i]);
        r.value(format!("M_{}", i + 1), consts.grad[i]);
    }
    Ok(Base {
        d,
        spec,
        consts,
        ratios,
    })
}

fn theorem_check(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("theorem_check");
    let b = base(cfg, &mut out)?;
    let k = cfg.k;
    let regs = regions(cfg, &b.d)?;
    let opts = cap_opts(cfg);
    let t = Instant::now();
    let per_hole = regs
        .par_iter()
        .map(|a| -> anyhow::Result<_> {
            let ex = excise(&b.d, a)?;
            let spec_ex = eig(&ex, k, cfg.tolerances.eigen)?;
            let cap = dirichlet_capacity(&b.d, a, &b.spec, &opts)?;
            let lower = capacity_lower_report(&cap, &b.spec, &spec_ex, &b.consts);
            let upper = spectrum_upper_report(&cap, &b.spec, &spec_ex, &b.consts, k)?;
            Ok((cap.value, spec_ex, lower, upper, MeshStats::of("excised", &ex)))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    out.timings.push(("holes".into(), t.elapsed().as_secs_f64()));

    let geometry = cfg.geometry.as_ref().expect("validated").label();
    let mut header: Vec<String> = ["geometry", "region", "h", "k", "Ca", "eps_k", "lhs", "rhs", "margin", "pass"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|i| format!("margin_{i}")));
    header.extend((1..=k).map(|i| format!("status_{i}")));
    out.table = Table::new(header);
    let mut rows = Vec::new();
    for (j, ((ca, spec_ex, lower, upper, mesh), rs)) in per_hole.into_iter().zip(&cfg.holes).enumerate() {
        let mut r = ExperimentReport::new(format!("hole_{j}"));
        r.extend(lower.clone());
        r.extend(upper.clone());
        let main = &lower.checks[0];
        let mut row = vec![
            geometry.clone(),
            rs.label(),
            num(cfg.h()),
            k.to_string(),
            num(ca),
            num(b.consts.eps[k - 1]),
            num(main.lhs),
            num(main.rhs),
            num(main.margin),
            r.all_passed().to_string(),
        ];
        let bound = |i: usize| {
            upper
                .checks
                .iter()
                .find(|c| c.name == format!("shift_le_c_sqrt_ca_{i}"))
                .expect("one record per index")
        };
        row.extend((1..=k).map(|i| num(bound(i).margin)));
        row.extend((1..=k).map(|i| status_str(bound(i).status).to_string()));
        out.table.push(row);
        rows.push(json!({
            "region": rs.label(),
            "Ca": ca,
            "excised_spectrum": spec_ex.to_json(),
        }));
        out.meshes.push(MeshStats { label: format!("excised_{j}"), ..mesh });
        out.report.extend(r);
    }
    if regs.len() >= 2 {
        let cas: Vec<f64> = rows.iter().map(|r| r["Ca"].as_f64().unwrap_or(f64::NAN)).collect();
        let mut series: Vec<Series> = (1..=k)
            .map(|i| Series {
                name: format!("shift {i}"),
                points: out
                    .report
                    .values
                    .iter()
                    .filter(|(key, _)| key.ends_with(&format!("/spectrum_upper/shift_{i}")))
                    .map(|(key, &v)| (cas[hole_index(key)], v))
                    .collect(),
            })
            .collect();
        for s in &mut series {
            s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let mut c_line: Vec<(f64, f64)> = cas.iter().map(|&c| (c, b.consts.c[0] * c.max(0.0).sqrt())).collect();
        c_line.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(Series {
            name: "C_1 Ca^1/2".into(),
            points: c_line,
        });
        out.plot = Some(Plot {
            title: "Eigenvalue shifts against capacity".into(),
            x_label: "Ca(A)".into(),
            y_label: "lambda_i(Omega - A) - lambda_i(Omega)".into(),
            log_x: true,
            log_y: true,
            series,
        });
    }
    out.data = json!({
        "base_spectrum": b.spec.to_json(),
        "constants": b.consts,
        "ratio_bounds": b.ratios,
        "holes": rows,
    });
    Ok(out)
}

/// `hole_<j>/...` → `j`.
fn hole_index(key: &str) -> usize {
    key.strip_prefix("hole_")
        .and_then(|s| s.split('/').next())
        .and_then(|s| s.parse().ok())
        .expect("hole-prefixed key")
}

fn diagnostics(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("proof_diagnostics");
    let b = base(cfg, &mut out)?;
    let regs = regions(cfg, &b.d)?;
    let opts = cap_opts(cfg);
    let t = Instant::now();
    let reports = regs
        .par_iter()
        .map(|a| -> anyhow::Result<ExperimentReport> {
            let cap = dirichlet_capacity(&b.d, a, &b.spec, &opts)?;
            Ok(proof_diagnostics(&b.d, a, &b.spec, &cap, cfg.k, &b.ratios)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    out.timings.push(("holes".into(), t.elapsed().as_secs_f64()));
    for (j, mut r) in reports.into_iter().enumerate() {
        r.title = format!("hole_{j}");
        out.report.extend(r);
    }
    out.table = Table::from_checks(&out.report);
    out.data = json!({
        "base_spectrum": b.spec.to_json(),
        "constants": b.consts,
        "regions": cfg.holes.iter().map(RegionSpec::label).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn faber_krahn(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    let opts = cfg.faber_krahn.as_ref().expect("validated");
    match opts.mode {
        FkMode::Deficit => fk_deficit(cfg),
        FkMode::Transplant => fk_transplant(cfg),
        FkMode::Stability => fk_stability(cfg, &opts.spike_widths, opts.scale),
        FkMode::HallFit => fk_hall_fit(cfg, &opts.aspects),
    }
}

fn fk_deficit(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("faber_krahn_deficit");
    let h = cfg.h();
    let d = domain(cfg, h)?;
    out.meshes.push(MeshStats::of("omega", &d));
    let hall = out.time("hall_deficit", || hall_deficit(&d));
    let c_n = cfg.constants.c_n.unwrap_or_else(|| {
        out.report
            .note("c_n not given: Hall's inequality checked with c = 0 (plain isoperimetric inequality)");
        0.0
    });
    out.report.extend(isoperimetric_check(&d, c_n));
    let spec = out.time("eigensolve", || eig(&d, 1, cfg.tolerances.eigen))?;
    let eps = eps_continuum(spec.eigenvalues[0], d.dim(), d.volume());
    out.report.value("lambda_1", spec.eigenvalues[0]);
    out.report.value("eps", eps);
    out.report.extend(volume_bound_check(&d, eps, c_n));
    let coarse = domain(cfg, 2.0 * h)?;
    out.meshes.push(MeshStats::of("omega_coarse", &coarse));
    let fk = out.time("faber_krahn", || faber_krahn_check(&coarse, &d, cfg.tolerances.eigen))?;
    out.report.extend(fk);
    out.table = Table::from_checks(&out.report);
    out.data = json!({ "hall_deficit": hall, "spectrum": spec.to_json() });
    Ok(out)
}

fn fk_transplant(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("faber_krahn_transplant");
    let d = domain(cfg, cfg.h())?;
    out.meshes.push(MeshStats::of("omega_hat", &d));
    let hall = hall_deficit(&d);
    let spec = out.time("eigensolve", || eig(&d, cfg.k, cfg.tolerances.eigen))?;
    let t = out.time("transplant", || transplant(&d, &hall.ball(), cfg.k, &spec))?;
    out.meshes.push(MeshStats::of("b_prime", &t.bprime_domain));
    out.report.extend(t.report.clone());
    out.report.value("slack", t.slack());
    out.table = Table::new(["index", "lambda_hat", "energy", "target", "slack"]);
    for i in 0..cfg.k {
        let (e, b) = (t.test_energies[i], t.target_bounds[i]);
        out.table.push(vec![
            (i + 1).to_string(),
            num(spec.eigenvalues[i]),
            num(e),
            num(b),
            num(b - e),
        ]);
    }
    out.data = json!({
        "ball": { "center": hall.best_center, "radius": hall.radius },
        "theta": t.theta,
        "alpha": t.alpha,
        "Rprime": t.rprime,
        "constants": t.constants,
        "hypothesis_met": t.hypothesis_met,
        "test_energies": t.test_energies,
        "target_bounds": t.target_bounds,
    });
    Ok(out)
}

fn fk_stability(cfg: &ExperimentConfig, widths: &[f64], scale: f64) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("faber_krahn_stability");
    let g = cfg.geometry.as_ref().expect("validated");
    let sb = g.spiked(cfg.h()).expect("validated spiked ball");
    let family = spiked_ball_family(&sb, widths, scale)?;
    for (j, m) in family.iter().enumerate() {
        out.meshes.push(MeshStats::of(format!("member_{j}"), m));
    }
    let params = StabilityParams {
        k: cfg.k,
        c_n: cfg.constants.c_n.expect("validated"),
        tol: cfg.tolerances.eigen,
        c1_n: cfg.constants.c1_n,
    };
    let so = out.time("stability", || stability_experiment(&family, &params))?;
    out.report.extend(so.report.clone());
    out.table = Table::new(StabilityRow::csv_header(cfg.k));
    for r in &so.rows {
        out.table.push(r.csv_record());
    }
    let series = (0..cfg.k)
        .map(|i| Series {
            name: format!("gap {}", i + 1),
            points: so.rows.iter().map(|r| (r.eps, r.gaps[i])).collect(),
        })
        .collect();
    out.plot = Some(Plot {
        title: "Spectral gap to the ball against the Faber-Krahn deficit".into(),
        x_label: "eps".into(),
        y_label: "|lambda_i(Omega) - lambda_i(B0)|".into(),
        log_x: true,
        log_y: true,
        series,
    });
    out.data = json!({ "rows": so.rows, "params": params });
    Ok(out)
}

fn fk_hall_fit(cfg: &ExperimentConfig, aspects: &[f64]) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("hall_fit");
    let dim = cfg.geometry.as_ref().map_or(3, |g| g.build(cfg.h(), cfg.seed).map_or(3, |d| d.dim()));
    let fit = out.time("fit", || fit_hall_constant(dim, cfg.h(), aspects))?;
    out.report.value("c", fit.c);
    out.report.value("dim", dim as f64);
    out.table = Table::new(["aspect", "F", "ratio"]);
    for ((a, f), r) in fit.aspects.iter().zip(&fit.deficits).zip(&fit.ratios) {
        out.table.push(vec![num(*a), num(*f), num(*r)]);
    }
    out.data = json!({
        "c": fit.c,
        "aspects": fit.aspects,
        "deficits": fit.deficits,
        "ratios": fit.ratios,
    });
    Ok(out)
}

fn lemmas(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("lemma_suite");
    out.report = out.time("trials", || lemma_suite(cfg.seed, cfg.trials));
    out.table = Table::from_checks(&out.report);
    out.data = json!({ "seed": cfg.seed, "trials": cfg.trials });
    Ok(out)
}

fn convergence(cfg: &ExperimentConfig) -> anyhow::Result<RunResult> {
    let mut out = RunResult::new("convergence_study");
    let hs: Vec<f64> = cfg.h_list.as_ref().expect("validated").iter().map(|s| s.0).collect();
    let want = |q| cfg.quantities.contains(&q);
    let need_spec = want(Quantity::Lambda) || want(Quantity::Capacity);
    let t = Instant::now();
    let per_mesh = hs
        .par_iter()
        .map(|&h| -> anyhow::Result<(MeshStats, Vec<(String, f64)>)> {
            let d = domain(cfg, h)?;
            let mut q = Vec::new();
            if need_spec {
                let spec = eig(&d, cfg.k, cfg.tolerances.eigen)?;
                if want(Quantity::Lambda) {
                    for i in 0..cfg.k {
                        q.push((format!("lambda_{}", i + 1), spec.eigenvalues[i]));
                    }
                }
                if want(Quantity::Capacity) {
                    let a = cfg.holes[0].build(&d)?;
                    q.push(("capacity".into(), dirichlet_capacity(&d, &a, &spec, &cap_opts(cfg))?.value));
                }
            }
            if want(Quantity::Volume) {
                q.push(("volume".into(), d.volume()));
            }
            Ok((MeshStats::of(format!("h={h}"), &d), q))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    out.timings.push(("meshes".into(), t.elapsed().as_secs_f64()));
    let names: Vec<String> = per_mesh[0].1.iter().map(|(n, _)| n.clone()).collect();
    let mut header = vec!["quantity", "order", "extrapolated", "error_estimate", "converged"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(hs.iter().map(|h| format!("h={h}")));
    out.table = Table::new(header);
    let mut series = Vec::new();
    let mut estimates = serde_json::Map::new();
    // Slow convergence is a diagnostic, not an inequality violation.
    let mut flagged = Vec::new();
    for (qi, name) in names.iter().enumerate() {
        let vals: Vec<f64> = per_mesh.iter().map(|(_, q)| q[qi].1).collect();
        let est = observed_order(&hs, &vals)?;
        let r = &mut out.report;
        r.value(format!("{name}/extrapolated"), est.extrapolated);
        r.value(format!("{name}/error_estimate"), est.error_estimate);
        match est.order {
            Some(p) => {
                r.value(format!("{name}/order"), p);
                if !est.converged {
                    r.note(format!("{name}: observed order {p:.3} is below {MIN_ORDER}"));
                    flagged.push(name.clone());
                }
            }
            None => r.note(format!("{name}: differences vanish, slope undefined, reported as converged")),
        }
        let mut row = vec![
            name.clone(),
            est.order.map_or_else(String::new, num),
            num(est.extrapolated),
            num(est.error_estimate),
            est.converged.to_string(),
        ];
        row.extend(vals.iter().map(|v| num(*v)));
        out.table.push(row);
        let mut order: Vec<usize> = (0..hs.len()).collect();
        order.sort_by(|&a, &b| hs[b].total_cmp(&hs[a]));
        series.push(Series {
            name: name.clone(),
            points: order
                .windows(2)
                .map(|w| (hs[w[0]], (vals[w[0]] - vals[w[1]]).abs()))
                .collect(),
        });
        estimates.insert(name.clone(), serde_json::to_value(&est)?);
    }
    out.meshes = per_mesh.into_iter().map(|(m, _)| m).collect();
    out.plot = Some(Plot {
        title: "Successive differences against mesh size".into(),
        x_label: "h".into(),
        y_label: "|q(h) - q(h next)|".into(),
        log_x: true,
        log_y: true,
        series,
    });
    out.data = json!({ "h": hs, "estimates": estimates, "flagged": flagged });
    Ok(out)
}

/// `true` when the run has no failed check.
pub fn succeeded(r: &ExperimentReport) -> bool {
    r.count(Status::Fail) == 0
}
