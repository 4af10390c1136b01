//! Test geometries: boxes, balls, spiked balls, ellipsoids, random blobs and
//! the excision regions used by the experiment suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GridDomain, Region};
use crate::error::{Error, Result};

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "dimension must be 2 or 3, got {dim}"
        )))
    }
}

fn check_spacing(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "spacing must be positive, got {h}"
        )))
    }
}

/// Cells per half-axis so that `[-extent, extent]` plus one inactive layer fits.
fn half_cells(extent: f64, h: f64) -> usize {
    (extent / h - 1e-9).ceil().max(0.0) as usize + 1
}

fn norm2(x: &[f64; 3], c: &[f64], dim: usize) -> f64 {
    (0..dim).map(|a| (x[a] - c[a]).powi(2)).sum()
}

/// Axis-aligned box centred at the origin.
///
/// Cell centres sit on the lattice `j h`, so a side that is a multiple of `2h`
/// has its faces on inactive cell centres and the discrete operator is the
/// classical one for a box of exactly that size.
pub fn make_box(dim: usize, sides: &[f64], h: f64) -> Result<GridDomain> {
    check_dim(dim)?;
    check_spacing(h)?;
    if sides.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "expected {dim} side lengths, got {}",
            sides.len()
        )));
    }
    if let Some(s) = sides.iter().find(|&&s| !(s >= 4.0 * h)) {
        return Err(Error::InvalidParameter(format!(
            "side length {s} is below 4h = {}",
            4.0 * h
        )));
    }
    let shape = sides
        .iter()
        .map(|&s| 2 * half_cells(s / 2.0, h) + 1)
        .collect();
    let half: Vec<f64> = sides.iter().map(|s| s / 2.0).collect();
    GridDomain::from_predicate(dim, shape, h, |x| (0..dim).all(|a| x[a].abs() < half[a]))
}

/// Ball of the given radius centred at the grid centre (the origin).
pub fn make_ball(dim: usize, radius: f64, h: f64) -> Result<GridDomain> {
    check_dim(dim)?;
    check_spacing(h)?;
    if !(radius >= 4.0 * h) {
        return Err(Error::InvalidParameter(format!(
            "radius {radius} is below 4h = {}",
            4.0 * h
        )));
    }
    let n = 2 * half_cells(radius, h) + 1;
    let r2 = radius * radius;
    GridDomain::from_predicate(dim, vec![n; dim], h, |x| norm2(x, &[0.0; 3], dim) < r2)
}

/// Ellipsoid centred at the origin with the given semi-axes along the rows of
/// `frame` (an orthonormal basis; identity when `None`).
pub fn make_ellipsoid(
    dim: usize,
    semi_axes: &[f64],
    frame: Option<[[f64; 3]; 3]>,
    h: f64,
) -> Result<GridDomain> {
    check_dim(dim)?;
    check_spacing(h)?;
    if semi_axes.len() != dim || semi_axes.iter().any(|&a| !(a >= 4.0 * h)) {
        return Err(Error::InvalidParameter(format!(
            "need {dim} semi-axes of at least 4h, got {semi_axes:?}"
        )));
    }
    let frame = frame.unwrap_or([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    let extent = semi_axes.iter().cloned().fold(0.0, f64::max);
    let n = 2 * half_cells(extent, h) + 1;
    GridDomain::from_predicate(dim, vec![n; dim], h, |x| {
        let mut s = 0.0;
        for k in 0..dim {
            let proj: f64 = (0..dim).map(|a| frame[k][a] * x[a]).sum();
            s += (proj / semi_axes[k]).powi(2);
        }
        s < 1.0
    })
}

/// A ball with a thin straight spike glued along the `+x` axis.
///
/// The spike is the slab `{x_0 >= c_0, |x_a| < width/2 (a >= 1)}` cut at
/// distance `radius + spike_len` from the ball centre `c`. The grid is sized
/// so that the ball of radius `padding` around `c` also fits.
#[derive(Clone, Debug)]
pub struct SpikedBall {
    pub dim: usize,
    pub radius: f64,
    pub spike_len: f64,
    pub spike_width: f64,
    pub h: f64,
    pub padding: f64,
}

impl SpikedBall {
    pub fn new(dim: usize, radius: f64, spike_len: f64, spike_width: f64, h: f64) -> Self {
        SpikedBall {
            dim,
            radius,
            spike_len,
            spike_width,
            h,
            padding: radius,
        }
    }

    /// Extra room: the grid will contain the ball of this radius about the core centre.
    pub fn padding(mut self, padding: f64) -> Self {
        self.padding = padding;
        self
    }

    /// Shift of the core centre along `x_0` in whole cells (negative = towards `-x`).
    fn shift_cells(&self) -> usize {
        let p = self.padding.max(self.radius);
        let far = p.max(self.radius + self.spike_len);
        ((far - p) / 2.0 / self.h).round() as usize
    }

    /// Physical centre of the core ball.
    pub fn center(&self) -> [f64; 3] {
        [-(self.shift_cells() as f64) * self.h, 0.0, 0.0]
    }

    pub fn build(&self) -> Result<GridDomain> {
        let (dim, h) = (self.dim, self.h);
        check_dim(dim)?;
        check_spacing(h)?;
        if !(self.radius >= 4.0 * h) {
            return Err(Error::InvalidParameter(format!(
                "core radius {} is below 4h",
                self.radius
            )));
        }
        if !(self.spike_len > 0.0) || !(self.spike_width >= 0.5 * h) {
            return Err(Error::InvalidParameter(format!(
                "spike {}x{} is not resolvable at h = {h}",
                self.spike_len, self.spike_width
            )));
        }
        let p = self.padding.max(self.radius);
        let s = self.shift_cells() as f64 * h;
        let tip = self.radius + self.spike_len;
        let ext_x = (tip - s).max(p + s);
        let mut shape = vec![2 * half_cells(p, h) + 1; dim];
        shape[0] = 2 * half_cells(ext_x, h) + 1;
        let c = self.center();
        let r2 = self.radius * self.radius;
        let half_w = self.spike_width / 2.0;
        GridDomain::from_predicate(dim, shape, h, |x| {
            if norm2(x, &c, dim) < r2 {
                return true;
            }
            let along = x[0] - c[0];
            along >= 0.0 && along < tip && (1..dim).all(|a| x[a].abs() < half_w)
        })
    }
}

/// Ball of radius `r` with a spike of length `spike_len` (outside the ball) and
/// width `spike_width`.
pub fn spiked_ball(
    dim: usize,
    radius: f64,
    spike_len: f64,
    spike_width: f64,
    h: f64,
) -> Result<GridDomain> {
    SpikedBall::new(dim, radius, spike_len, spike_width, h).build()
}

/// Two disjoint balls of radius `r` centred at `(+-separation/2, 0, ..)`,
/// treated as one (disconnected) domain.
pub fn two_balls(dim: usize, radius: f64, separation: f64, h: f64) -> Result<GridDomain> {
    check_dim(dim)?;
    check_spacing(h)?;
    if !(separation > 2.0 * radius) {
        return Err(Error::InvalidParameter(
            "balls must be disjoint (separation > 2r)".into(),
        ));
    }
    let half_sep = (separation / 2.0 / h).round() * h;
    let mut shape = vec![2 * half_cells(radius, h) + 1; dim];
    shape[0] = 2 * half_cells(half_sep + radius, h) + 1;
    let r2 = radius * radius;
    GridDomain::from_predicate(dim, shape, h, |x| {
        norm2(x, &[half_sep, 0.0, 0.0], dim) < r2 || norm2(x, &[-half_sep, 0.0, 0.0], dim) < r2
    })
}

/// Reproducible connected blob: a core ball of radius 1/2 with 3 to 6
/// satellite balls whose centres lie inside the core.
pub fn random_blob(seed: u64, dim: usize, h: f64) -> Result<GridDomain> {
    check_dim(dim)?;
    check_spacing(h)?;
    if h > 0.05 {
        return Err(Error::InvalidParameter(format!(
            "random blobs need h <= 0.05, got {h}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sat = rng.gen_range(3..=6);
    let mut balls: Vec<([f64; 3], f64)> = vec![([0.0; 3], 0.5)];
    for _ in 0..n_sat {
        let mut c = [0.0; 3];
        // Rejection-sample a centre inside the core.
        loop {
            for v in c.iter_mut().take(dim) {
                *v = rng.gen_range(-0.45..0.45);
            }
            if norm2(&c, &[0.0; 3], dim) < 0.45 * 0.45 {
                break;
            }
        }
        let r = rng.gen_range(0.15..0.4);
        balls.push((c, r));
    }
    let n = 2 * half_cells(0.95, h) + 1;
    let blob = GridDomain::from_predicate(dim, vec![n; dim], h, |x| {
        balls.iter().any(|(c, r)| norm2(x, c, dim) < r * r)
    })?;
    if !blob.is_connected() {
        return Err(Error::InvalidParameter(format!(
            "blob for seed {seed} is not connected at h = {h}"
        )));
    }
    Ok(blob)
}

/// Cells with `r_in <= |x| < r_out` (centred at the origin).
pub fn annulus_region(domain: &GridDomain, r_in: f64, r_out: f64) -> Result<Region> {
    let h = domain.spacing();
    if !(r_in >= 0.0 && r_out - r_in >= h) {
        return Err(Error::InvalidParameter(format!(
            "annulus [{r_in}, {r_out}) is thinner than one cell (h = {h})"
        )));
    }
    let dim = domain.dim();
    let mask = (0..domain.n_cells())
        .map(|i| {
            let r = norm2(&domain.cell_center(i), &[0.0; 3], dim).sqrt();
            r >= r_in && r < r_out
        })
        .collect();
    Region::from_mask(domain, mask)
}

/// Cells with `|x - center| < radius`; may be empty for sub-cell radii.
pub fn ball_region(domain: &GridDomain, center: &[f64], radius: f64) -> Result<Region> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "negative radius {radius}"
        )));
    }
    let dim = domain.dim();
    let r2 = radius * radius;
    let mask = (0..domain.n_cells())
        .map(|i| norm2(&domain.cell_center(i), center, dim) < r2)
        .collect();
    Region::from_mask(domain, mask)
}

/// Cells whose centres lie in the half-open box `[lo, hi)`.
pub fn box_region(domain: &GridDomain, lo: &[f64], hi: &[f64]) -> Result<Region> {
    let dim = domain.dim();
    let mask = (0..domain.n_cells())
        .map(|i| {
            let x = domain.cell_center(i);
            (0..dim).all(|a| x[a] >= lo[a] && x[a] < hi[a])
        })
        .collect();
    Region::from_mask(domain, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::measure;
    use std::f64::consts::PI;

    #[test]
    fn box_cell_counts() {
        let b = make_box(2, &[1.0, 1.0], 1.0 / 64.0).unwrap();
        assert_eq!(b.active_count(), 63 * 63);
        assert!(make_box(2, &[1.0, 1.0], 0.0).is_err());
        assert!(make_box(2, &[0.01, 1.0], 0.01).is_err());
    }

    #[test]
    fn box_measure_face_count() {
        let h = 1.0 / 128.0;
        let m = measure(&make_box(2, &[1.0, 1.0], h).unwrap());
        // 127 x 127 cells: volume 127^2 h^2, perimeter 4 * 127 h.
        assert!((m.volume - 1.0).abs() <= 2.0 * h);
        assert!((m.perimeter - 4.0 * 127.0 * h).abs() < 1e-12);
    }

    #[test]
    fn ball_volumes_match_analytic() {
        let disk = make_ball(2, 1.0, 1.0 / 256.0).unwrap();
        assert!((disk.volume() - PI).abs() < 0.02);
        let ball = make_ball(3, 1.0, 1.0 / 64.0).unwrap();
        assert!((ball.volume() - 4.0 * PI / 3.0).abs() < 0.1);
        assert!(make_ball(2, 0.01, 0.01).is_err());
    }

    #[test]
    fn disk_staircase_perimeter_between_circle_and_square() {
        let m = measure(&make_ball(2, 1.0, 1.0 / 256.0).unwrap());
        assert!(m.perimeter > 2.0 * PI && m.perimeter <= 8.0 + 1e-12);
        assert!((m.corrected_perimeter(2) - 2.0 * PI).abs() < 0.05);
    }

    #[test]
    fn ball_volume_converges_at_first_order_or_better() {
        let errs: Vec<f64> = [64.0, 128.0, 256.0]
            .iter()
            .map(|&n| (make_ball(2, 1.0, 1.0 / n).unwrap().volume() - PI).abs())
            .collect();
        // Least-squares slope of log err against log h.
        let hs = [1.0 / 64.0f64, 1.0 / 128.0, 1.0 / 256.0];
        let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let xm = xs.iter().sum::<f64>() / 3.0;
        let ym = ys.iter().sum::<f64>() / 3.0;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>();
        assert!(slope >= 0.9, "observed order {slope}");
    }

    #[test]
    fn annulus_area() {
        let h = 1.0 / 256.0;
        let disk = make_ball(2, 1.0, h).unwrap();
        let a = annulus_region(&disk, 0.95, 0.96).unwrap();
        let area = a.count() as f64 * h * h;
        let exact = PI * (0.96f64.powi(2) - 0.95f64.powi(2));
        assert!((area - exact).abs() < 0.1 * exact);
        // Entirely inside the disk: no boundary contact.
        assert!(a.is_subset_of(&Region::all_of(&disk)));
        let dist = disk.boundary_distance();
        assert!(a
            .mask()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .all(|(i, _)| dist[i] > 1));
    }

    #[test]
    fn spiked_ball_volume_and_connectivity() {
        let d = spiked_ball(2, 1.0, 3.0, 0.05, 1.0 / 256.0).unwrap();
        assert!(d.is_connected());
        assert!((d.volume() - (PI + 0.15)).abs() < 0.02, "{}", d.volume());
    }

    #[test]
    fn random_blob_is_deterministic() {
        let a = random_blob(7, 2, 1.0 / 32.0).unwrap();
        let b = random_blob(7, 2, 1.0 / 32.0).unwrap();
        assert_eq!(a.mask(), b.mask());
        assert!(a.is_connected());
        let c = random_blob(8, 2, 1.0 / 32.0).unwrap();
        assert_ne!(a.mask(), c.mask());
    }

    #[test]
    fn two_balls_are_disconnected() {
        let d = two_balls(2, 0.5, 1.5, 1.0 / 32.0).unwrap();
        assert_eq!(d.components().len(), 2);
        assert!(!d.is_connected());
    }
}
