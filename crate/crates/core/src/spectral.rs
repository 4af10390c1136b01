//! Discrete Dirichlet Laplacian, its lowest eigenpairs and the ratio bounds
//! `m_k`, `M_k`.
//!
//! Eigenfunctions are stored over active cells in degree-of-freedom order and
//! normalised in `L²` with cell weight `h^dim`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::GridDomain;
use crate::error::{Error, Result};
use crate::linalg::{dense_eigenpairs, lobpcg, Amg, CsrMatrix, LinearOperator, LobpcgOptions};

/// Operators at or below this size are diagonalised densely.
const DENSE_LIMIT: usize = 400;
/// Relative gap below which neighbouring eigenvalues form one cluster.
const CLUSTER_RTOL: f64 = 1e-6;
const SEED: u64 = 0x00ca_91ab;

/// The `2·dim + 1`-point Dirichlet Laplacian on the active cells of a domain.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    matrix: CsrMatrix,
    dim: usize,
    h: f64,
    domain_id: String,
}

impl SparseOperator {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n_dof(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    /// Discrete Dirichlet energy `h^dim fᵀ L f`.
    pub fn energy(&self, f: &[f64]) -> f64 {
        self.h.powi(self.dim as i32) * self.matrix.bilinear(f, f)
    }

    /// Discrete `L²` inner product `h^dim fᵀ g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.h.powi(self.dim as i32) * crate::linalg::dot(f, g)
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.mul_vec_into(x, y)
    }
}

pub fn assemble(domain: &GridDomain) -> SparseOperator {
    let h2 = domain.spacing() * domain.spacing();
    let diag = 2.0 * domain.dim() as f64 / h2;
    let dof = domain.dof_map();
    let rows = domain
        .active_indices()
        .into_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(2 * domain.dim() + 1);
            row.push((dof[i], diag));
            domain.for_each_neighbor(i, |_, j| {
                if domain.is_active(j) {
                    row.push((dof[j], -1.0 / h2));
                }
            });
            row
        })
        .collect();
    SparseOperator {
        matrix: CsrMatrix::from_rows(domain.active_count(), rows),
        dim: domain.dim(),
        h: domain.spacing(),
        domain_id: domain.id(),
    }
}

/// Lowest Dirichlet eigenpairs of one domain.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    /// One vector per eigenvalue, over active cells in DOF order.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// `L²` norm of `L φ - λ φ` for each normalised pair.
    pub residuals: Vec<f64>,
    pub domain_id: String,
    pub h: f64,
    pub dim: usize,
    pub tol: f64,
    pub iterations: usize,
}

#[derive(Serialize)]
struct SpectralRecord<'a> {
    domain_id: &'a str,
    h: f64,
    k: usize,
    tol: f64,
    eigenvalues: &'a [f64],
    residuals: &'a [f64],
}

impl SpectralData {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.eigenvalues[i]
    }

    pub fn ground_state(&self) -> &[f64] {
        &self.eigenfunctions[0]
    }

    /// `{domain_id, h, k, tol, eigenvalues, residuals}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SpectralRecord {
            domain_id: &self.domain_id,
            h: self.h,
            k: self.k(),
            tol: self.tol,
            eigenvalues: &self.eigenvalues,
            residuals: &self.residuals,
        })
        .expect("record serialises")
    }

    /// Eigenfunctions in the binary sidecar format.
    pub fn sidecar(&self) -> Vec<u8> {
        write_sidecar(&self.domain_id, &self.eigenfunctions)
    }
}

/// `k` lowest eigenpairs with `‖Lφ - λφ‖ ≤ tol·λ`.
pub fn lowest_eigenpairs(op: &SparseOperator, k: usize, tol: f64) -> Result<SpectralData> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = op.n_dof();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside 1..={n} degrees of freedom"
        )));
    }
    let res = if n <= DENSE_LIMIT {
        dense_eigenpairs(op, k)?
    } else {
        let amg = Amg::new(&op.matrix)?;
        let opts = LobpcgOptions {
            tol,
            max_iter: 2000,
            guard: 4.max(k / 2),
            seed: SEED,
        };
        lobpcg(op, &amg, k, &opts)?
    };
    let scale = op.h.powi(op.dim as i32).sqrt().recip();
    let mut eigenfunctions: Vec<Vec<f64>> = (0..k)
        .map(|j| res.vectors.column(j).iter().map(|v| v * scale).collect())
        .collect();
    for (j, f) in eigenfunctions.iter_mut().enumerate() {
        let flip = if j == 0 {
            f.iter().sum::<f64>() < 0.0
        } else {
            let max = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            f.iter()
                .find(|v| v.abs() > 1e-12 * max)
                .is_some_and(|&v| v < 0.0)
        };
        if flip {
            f.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let residuals = res
        .residuals
        .iter()
        .zip(&res.values)
        .map(|(r, l)| r * l)
        .collect();
    Ok(SpectralData {
        eigenvalues: res.values,
        eigenfunctions,
        residuals,
        domain_id: op.domain_id.clone(),
        h: op.h,
        dim: op.dim,
        tol,
        iterations: res.iterations,
    })
}

/// Groups eigenvalue indices into clusters of numerically equal values.
pub fn clusters(eigenvalues: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=eigenvalues.len() {
        if i == eigenvalues.len()
            || eigenvalues[i] - eigenvalues[i - 1] > CLUSTER_RTOL * eigenvalues[i].abs()
        {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Discrete sup-bounds of `φ_i/φ₁` and of its gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioBounds {
    /// `m_1, …, m_k`.
    pub m: Vec<f64>,
    /// `M_1, …, M_k`.
    pub grad: Vec<f64>,
    pub admissible_margin: usize,
    pub admissible_cells: usize,
}

impl RatioBounds {
    pub fn k(&self) -> usize {
        self.m.len()
    }

    pub fn m_k(&self) -> f64 {
        *self.m.last().expect("k >= 1")
    }

    pub fn big_m_k(&self) -> f64 {
        *self.grad.last().expect("k >= 1")
    }
}

/// `m_i` and `M_i` for `i ≤ k` over cells at least `margin` steps from the
/// discrete boundary.
///
/// Eigenvalue clusters are handled without choosing a basis: at each cell the
/// ratios of a whole cluster form a vector `g`, and its Euclidean norm
/// (resp. the spectral norm of its Jacobian) is the supremum over unit
/// combinations within the cluster. A cluster counts once any of its indices
/// is `≤ k`, so the bounds hold for every orthonormal choice of eigenvectors.
/// A cluster cut off by the end of `spec` is only partially seen; compute at
/// least one pair beyond `k` when that matters.
pub fn ratio_bounds(
    spec: &SpectralData,
    domain: &GridDomain,
    k: usize,
    margin: usize,
) -> Result<RatioBounds> {
    if k == 0 || k > spec.k() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} but {} eigenpairs are available",
            spec.k()
        )));
    }
    if margin == 0 {
        return Err(Error::InvalidParameter("margin must be at least 1".into()));
    }
    if spec.eigenfunctions[0].len() != domain.active_count() {
        return Err(Error::GridMismatch {
            expected: vec![domain.active_count()],
            found: vec![spec.eigenfunctions[0].len()],
        });
    }
    let phi1 = spec.ground_state();
    let max1 = phi1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dist = domain.boundary_distance();
    let dof = domain.dof_map();
    let admissible: Vec<usize> = domain
        .active_indices()
        .into_iter()
        .filter(|&i| dist[i] >= margin)
        .collect();
    if admissible.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no cells at distance >= {margin} from the boundary"
        )));
    }
    for &i in &admissible {
        if phi1[dof[i]] < 1e-12 * max1 {
            return Err(Error::VanishingGroundState {
                cell: i,
                detail: format!(
                    "φ₁ = {:e} below 1e-12·max at an admissible cell; the domain is likely disconnected",
                    phi1[dof[i]]
                ),
            });
        }
    }
    // Ratio of eigenfunction j to φ₁ at a cell, defined where φ₁ > 0.
    let ratio = |j: usize, cell: usize| -> Option<f64> {
        let d = dof[cell];
        (d != usize::MAX && phi1[d] > 1e-12 * max1).then(|| spec.eigenfunctions[j][d] / phi1[d])
    };
    let h = domain.spacing();
    let all = clusters(&spec.eigenvalues);
    let mut cluster_m = Vec::new();
    let mut cluster_grad = Vec::new();
    for c in &all {
        if c.start >= k {
            break;
        }
        let mut m_c = 0.0f64;
        let mut g_c = 0.0f64;
        let size = c.len();
        for &cell in &admissible {
            let mut norm2 = 0.0;
            let mut jac = DMatrix::<f64>::zeros(size, domain.dim());
            for (r, j) in c.clone().enumerate() {
                let g = ratio(j, cell).expect("admissible cells carry φ₁ > 0");
                norm2 += g * g;
                let mut lo = [None; 3];
                let mut hi = [None; 3];
                let mut side = 0usize;
                domain.for_each_neighbor(cell, |axis, nb| {
                    let v = ratio(j, nb);
                    if side.is_multiple_of(2) {
                        lo[axis] = v;
                    } else {
                        hi[axis] = v;
                    }
                    side += 1;
                });
                for axis in 0..domain.dim() {
                    jac[(r, axis)] = match (lo[axis], hi[axis]) {
                        (Some(a), Some(b)) => (b - a) / (2.0 * h),
                        (Some(a), None) => (g - a) / h,
                        (None, Some(b)) => (b - g) / h,
                        (None, None) => 0.0,
                    };
                }
            }
            m_c = m_c.max(norm2.sqrt());
            let gn = if size == 1 {
                jac.row(0).norm()
            } else {
                let gram = &jac * jac.transpose();
                gram.symmetric_eigenvalues().max().max(0.0).sqrt()
            };
            g_c = g_c.max(gn);
        }
        cluster_m.push((c.clone(), m_c));
        cluster_grad.push(g_c);
    }
    let mut m = Vec::with_capacity(k);
    let mut grad = Vec::with_capacity(k);
    let (mut run_m, mut run_g) = (0.0f64, 0.0f64);
    for i in 0..k {
        for ((c, mc), gc) in cluster_m.iter().zip(&cluster_grad) {
            if c.contains(&i) {
                run_m = run_m.max(*mc);
                run_g = run_g.max(*gc);
            }
        }
        m.push(run_m);
        grad.push(run_g);
    }
    Ok(RatioBounds {
        m,
        grad,
        admissible_margin: margin,
        admissible_cells: admissible.len(),
    })
}

/// Ratio bounds for margins 1, 2 and 3, skipping margins with no cells.
pub fn ratio_bounds_by_margin(
    spec: &SpectralData,
    domain: &GridDomain,
    k: usize,
) -> Result<Vec<RatioBounds>> {
    let mut out = Vec::new();
    for margin in 1..=3 {
        match ratio_bounds(spec, domain, k, margin) {
            Ok(rb) => out.push(rb),
            Err(Error::InvalidParameter(_)) if margin > 1 => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

const SIDECAR_MAGIC: &str = "CAPLAB-F64 1";

/// Binary sidecar: one text header line
/// `CAPLAB-F64 1 domain=<id> rows=<r> cols=<c>` followed by the rows as
/// little-endian `f64`, row-major.
pub fn write_sidecar(domain_id: &str, rows: &[Vec<f64>]) -> Vec<u8> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut out =
        format!("{SIDECAR_MAGIC} domain={domain_id} rows={} cols={cols}\n", rows.len()).into_bytes();
    out.reserve(rows.len() * cols * 8);
    for row in rows {
        assert_eq!(row.len(), cols, "ragged sidecar rows");
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`write_sidecar`]; returns the domain id and rows.
pub fn read_sidecar(bytes: &[u8]) -> Result<(String, Vec<Vec<f64>>)> {
    let bad = |m: &str| Error::Parse(format!("sidecar: {m}"));
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
    let rest = header
        .strip_prefix(SIDECAR_MAGIC)
        .ok_or_else(|| bad("wrong magic"))?;
    let mut id = None;
    let mut rows = None;
    let mut cols = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("domain", v)) => id = Some(v.to_string()),
            Some(("rows", v)) => rows = v.parse::<usize>().ok(),
            Some(("cols", v)) => cols = v.parse::<usize>().ok(),
            _ => return Err(bad("unknown header field")),
        }
    }
    let (id, rows, cols) = match (id, rows, cols) {
        (Some(i), Some(r), Some(c)) => (i, r, c),
        _ => return Err(bad("incomplete header")),
    };
    let body = &bytes[nl + 1..];
    if body.len() != rows * cols * 8 {
        return Err(bad("payload length does not match header"));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((id, values.chunks(cols.max(1)).take(rows).map(|c| c.to_vec()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{excise, make_ball, make_box, two_balls, ball_region};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn discrete_box_eigs(h: f64, sides: &[f64], k: usize) -> Vec<f64> {
        // Centre-point boxes have (side/h - 1) interior cells per axis.
        let ns: Vec<usize> = sides.iter().map(|s| (s / h).round() as usize - 1).collect();
        let s = |m: usize, n: usize| (2.0 / (h * h)) * (1.0 - (m as f64 * PI / (n + 1) as f64).cos());
        let mut all = Vec::new();
        for a in 1..=k + 2 {
            for b in 1..=k + 2 {
                all.push(s(a, ns[0]) + s(b, ns[1]));
            }
        }
        all.sort_by(f64::total_cmp);
        all.truncate(k);
        all
    }

    #[test]
    fn stencil_of_tiny_domains() {
        let h = 0.5;
        let mut mask = vec![false; 9];
        mask[4] = true;
        let one = GridDomain::new(2, vec![3, 3], h, mask).unwrap();
        let op = assemble(&one);
        assert_eq!(op.matrix().to_dense()[(0, 0)], 4.0 / (h * h));
        let mut mask = vec![false; 12];
        mask[5] = true;
        mask[6] = true;
        let two = GridDomain::new(2, vec![3, 4], h, mask).unwrap();
        let d = assemble(&two).matrix().to_dense();
        assert_eq!(d[(0, 0)], 16.0);
        assert_eq!(d[(1, 1)], 16.0);
        assert_eq!(d[(0, 1)], -4.0);
        assert_eq!(d[(1, 0)], -4.0);
        assert!(assemble(&make_ball(3, 0.3, 0.05).unwrap()).matrix().is_symmetric(0.0));
    }

    #[test]
    fn square_matches_closed_form() {
        let h = 1.0 / 64.0;
        let d = make_box(2, &[1.0, 1.0], h).unwrap();
        let spec = lowest_eigenpairs(&assemble(&d), 4, 1e-9).unwrap();
        for (got, want) in spec.eigenvalues.iter().zip(discrete_box_eigs(h, &[1.0, 1.0], 4)) {
            assert_relative_eq!(*got, want, max_relative = 1e-8);
        }
        assert_relative_eq!(spec.eigenvalues[0], 2.0 * PI * PI, max_relative = 0.01);
        for (r, l) in spec.residuals.iter().zip(&spec.eigenvalues) {
            assert!(*r <= 1e-9 * l);
        }
    }

    #[test]
    fn normalisation_sign_and_rayleigh_consistency() {
        let d = make_ball(2, 1.0, 1.0 / 32.0).unwrap();
        let op = assemble(&d);
        let spec = lowest_eigenpairs(&op, 3, 1e-9).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let g = op.inner(&spec.eigenfunctions[i], &spec.eigenfunctions[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() <= 1e-8, "gram[{i}][{j}] = {g}");
            }
            let rq = op.energy(&spec.eigenfunctions[i]);
            assert!((rq - spec.eigenvalues[i]).abs() <= 1e-8 * spec.eigenvalues[i]);
        }
        assert!(spec.ground_state().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn agrees_with_dense_on_small_domains() {
        let d = make_ball(2, 0.35, 0.04).unwrap();
        assert!(d.active_count() > 200);
        let op = assemble(&d);
        let dense = dense_eigenpairs(&op, 5).unwrap();
        // Force the iterative path by asking through lobpcg directly.
        let amg = Amg::new(op.matrix()).unwrap();
        let it = lobpcg(&op, &amg, 5, &LobpcgOptions { guard: 2, ..Default::default() }).unwrap();
        for (a, b) in it.values.iter().zip(&dense.values) {
            assert_relative_eq!(*a, *b, max_relative = 1e-8);
        }
    }

    #[test]
    fn excision_raises_every_eigenvalue() {
        let h = 1.0 / 48.0;
        let d = make_box(2, &[1.0, 1.0], h).unwrap();
        let a = ball_region(&d, &[0.1, -0.05], 0.12).unwrap();
        let e = excise(&d, &a).unwrap();
        let s0 = lowest_eigenpairs(&assemble(&d), 4, 1e-9).unwrap();
        let s1 = lowest_eigenpairs(&assemble(&e), 4, 1e-9).unwrap();
        for (x, y) in s0.eigenvalues.iter().zip(&s1.eigenvalues) {
            assert!(y >= x);
        }
    }

    #[test]
    fn ratio_bounds_trivial_and_rectangle() {
        let d = make_box(2, &[1.0, 0.7], 1.0 / 80.0).unwrap();
        let spec = lowest_eigenpairs(&assemble(&d), 2, 1e-9).unwrap();
        let rb = ratio_bounds(&spec, &d, 2, 1).unwrap();
        assert_eq!(rb.m[0], 1.0);
        assert_eq!(rb.grad[0], 0.0);
        // sin(2πx)/sin(πx) = 2cos(πx) peaks just inside the boundary.
        assert!(rb.m[1] < 2.0 && rb.m[1] > 1.98, "{}", rb.m[1]);
        let by_margin = ratio_bounds_by_margin(&spec, &d, 2).unwrap();
        assert_eq!(by_margin.len(), 3);
        assert!(by_margin.windows(2).all(|w| w[1].m[1] <= w[0].m[1]));
    }

    #[test]
    fn degenerate_cluster_bound_is_basis_free() {
        let d = make_box(2, &[1.0, 1.0], 1.0 / 64.0).unwrap();
        let spec = lowest_eigenpairs(&assemble(&d), 3, 1e-9).unwrap();
        assert_eq!(clusters(&spec.eigenvalues), vec![0..1, 1..3]);
        let rb = ratio_bounds(&spec, &d, 2, 1).unwrap();
        // |(2cos πx, 2cos πy)| peaks at the corners.
        assert!((rb.m[1] - 2.0 * 2f64.sqrt()).abs() < 0.02, "{}", rb.m[1]);
        assert!(rb.m[1] <= ratio_bounds(&spec, &d, 3, 1).unwrap().m[2]);
    }

    #[test]
    fn disconnected_domain_is_rejected() {
        let d = two_balls(2, 0.3, 1.0, 1.0 / 32.0).unwrap();
        let spec = lowest_eigenpairs(&assemble(&d), 2, 1e-9).unwrap();
        assert!(matches!(
            ratio_bounds(&spec, &d, 1, 1),
            Err(Error::VanishingGroundState { .. })
        ));
    }

    #[test]
    fn json_and_sidecar_roundtrip() {
        let d = make_box(2, &[0.5, 0.5], 1.0 / 16.0).unwrap();
        let spec = lowest_eigenpairs(&assemble(&d), 2, 1e-9).unwrap();
        let json = spec.to_json();
        assert_eq!(json["k"], 2);
        assert_eq!(json["domain_id"], d.id());
        let (id, rows) = read_sidecar(&spec.sidecar()).unwrap();
        assert_eq!(id, d.id());
        assert_eq!(rows, spec.eigenfunctions);
        assert!(read_sidecar(b"nonsense\n").is_err());
    }

    #[test]
    fn invalid_requests() {
        let d = make_box(2, &[0.5, 0.5], 1.0 / 16.0).unwrap();
        let op = assemble(&d);
        assert!(lowest_eigenpairs(&op, 0, 1e-9).is_err());
        assert!(lowest_eigenpairs(&op, 1, 0.0).is_err());
        assert!(lowest_eigenpairs(&op, op.n_dof() + 1, 1e-9).is_err());
    }
}
