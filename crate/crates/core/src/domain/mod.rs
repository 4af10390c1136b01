//! Uniform-grid cell masks for bounded Euclidean domains and excision regions.
//!
//! A [`GridDomain`] is a boolean mask over a 2D or 3D grid of cubic cells of
//! side `h`. The grid is always centred on the origin: cell `i` along an axis
//! with `n` cells has its centre at `(i + 1/2 - n/2) h`. The outer layer of
//! cells is kept inactive so that a homogeneous Dirichlet condition can be
//! imposed on every active cell through its inactive neighbours.

mod dmask;
mod generators;

pub use dmask::{read_dmask, write_dmask};
pub use generators::{
    annulus_region, ball_region, box_region, make_ball, make_box, make_ellipsoid, random_blob,
    spiked_ball, two_balls, SpikedBall,
};

use std::collections::VecDeque;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Volume of the unit ball in `R^dim`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => {
            // w_n = 2 pi / n * w_{n-2}
            2.0 * std::f64::consts::PI / dim as f64 * unit_ball_volume(dim - 2)
        }
    }
}

/// Staircase-perimeter correction used by the isoperimetric harness.
///
/// The face-count perimeter of a smooth closed curve (surface) overestimates
/// its length (area) by the mean of `|n|_1` over the unit sphere: `4/pi` in
/// 2D and `3/2` in 3D.
pub fn staircase_correction(dim: usize) -> f64 {
    match dim {
        2 => 4.0 / std::f64::consts::PI,
        3 => 1.5,
        _ => 1.0,
    }
}

/// A bounded open set discretised as active cells of a uniform grid.
#[derive(Clone, PartialEq)]
pub struct GridDomain {
    dim: usize,
    shape: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
    mask: Vec<bool>,
    connected: bool,
}

impl fmt::Debug for GridDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridDomain")
            .field("dim", &self.dim)
            .field("shape", &self.shape)
            .field("spacing", &self.spacing)
            .field("active", &self.active_count())
            .field("connected", &self.connected)
            .finish()
    }
}

impl GridDomain {
    /// Builds a domain from a raw mask, validating the grid invariants.
    pub fn new(dim: usize, shape: Vec<usize>, spacing: f64, mask: Vec<bool>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if shape.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "shape has {} axes for a {dim}-dimensional grid",
                shape.len()
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if shape.iter().any(|&n| n < 3) {
            return Err(Error::InvalidParameter(format!(
                "every axis needs at least 3 cells, got {shape:?}"
            )));
        }
        let n_cells: usize = shape.iter().product();
        if mask.len() != n_cells {
            return Err(Error::InvalidParameter(format!(
                "mask has {} entries for {n_cells} cells",
                mask.len()
            )));
        }
        let origin = shape.iter().map(|&n| -(n as f64) * spacing / 2.0).collect();
        let mut domain = GridDomain {
            dim,
            shape,
            spacing,
            origin,
            mask,
            connected: false,
        };
        if domain.active_count() == 0 {
            return Err(Error::EmptyDomain("no active cells".into()));
        }
        if let Some(idx) = (0..n_cells).find(|&i| domain.mask[i] && domain.on_outer_layer(i)) {
            return Err(Error::InvalidParameter(format!(
                "active cell {:?} lies on the grid margin",
                domain.coords(idx)
            )));
        }
        domain.connected = domain.components().len() == 1;
        Ok(domain)
    }

    /// Builds a centred grid with `shape` cells and activates the cells whose
    /// centres satisfy `inside`.
    pub fn from_predicate<F>(dim: usize, shape: Vec<usize>, spacing: f64, inside: F) -> Result<Self>
    where
        F: Fn(&[f64; 3]) -> bool,
    {
        let n_cells: usize = shape.iter().product();
        let mut mask = vec![false; n_cells];
        let probe = GridLayout {
            dim,
            shape: &shape,
            spacing,
        };
        for (idx, m) in mask.iter_mut().enumerate() {
            *m = inside(&probe.center(idx));
        }
        GridDomain::new(dim, shape, spacing, mask)
    }

    /// A new domain on the same grid with a different mask.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        GridDomain::new(self.dim, self.shape.clone(), self.spacing, mask)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n_cells(&self) -> usize {
        self.mask.len()
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// True when the active cells form a single face-connected set.
    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// Cell volume `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Active cell count times `h^dim`.
    pub fn volume(&self) -> f64 {
        self.active_count() as f64 * self.cell_volume()
    }

    /// Indices of active cells in row-major order; this is the degree-of-freedom
    /// ordering used by every operator.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Map from cell index to degree-of-freedom index (`usize::MAX` if inactive).
    pub fn dof_map(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.mask.len()];
        let mut next = 0;
        for (i, &m) in self.mask.iter().enumerate() {
            if m {
                map[i] = next;
                next += 1;
            }
        }
        map
    }

    pub fn strides(&self) -> [usize; 3] {
        let mut s = [0usize; 3];
        let mut acc = 1;
        for a in (0..self.dim).rev() {
            s[a] = acc;
            acc *= self.shape[a];
        }
        s
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let s = self.strides();
        let mut c = [0usize; 3];
        let mut rem = idx;
        for a in 0..self.dim {
            c[a] = rem / s[a];
            rem %= s[a];
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        let s = self.strides();
        coords.iter().zip(s.iter()).map(|(c, s)| c * s).sum()
    }

    /// Physical coordinates of the centre of cell `idx` (unused axes are zero).
    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        GridLayout {
            dim: self.dim,
            shape: &self.shape,
            spacing: self.spacing,
        }
        .center(idx)
    }

    fn on_outer_layer(&self, idx: usize) -> bool {
        let c = self.coords(idx);
        (0..self.dim).any(|a| c[a] == 0 || c[a] + 1 == self.shape[a])
    }

    /// Calls `f(axis, neighbour_index)` for the 2·dim face neighbours of an
    /// interior cell. Must not be called on an outer-layer cell.
    #[inline]
    pub fn for_each_neighbor<F: FnMut(usize, usize)>(&self, idx: usize, mut f: F) {
        let s = self.strides();
        for a in 0..self.dim {
            f(a, idx - s[a]);
            f(a, idx + s[a]);
        }
    }

    /// Face-connected components of the active set, each as a sorted list of
    /// cell indices. Components are ordered by their smallest cell index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        components_of(self, &self.mask)
    }

    /// Number of face steps from an active cell to the nearest inactive cell
    /// (1 for cells touching the discrete boundary, 0 for inactive cells).
    pub fn boundary_distance(&self) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.mask.len()];
        let mut queue = VecDeque::new();
        for (i, &m) in self.mask.iter().enumerate() {
            if !m {
                dist[i] = 0;
            }
        }
        for (i, &m) in self.mask.iter().enumerate() {
            if m {
                let mut touches = false;
                self.for_each_neighbor(i, |_, j| touches |= !self.mask[j]);
                if touches {
                    dist[i] = 1;
                    queue.push_back(i);
                }
            }
        }
        while let Some(i) = queue.pop_front() {
            let d = dist[i];
            self.for_each_neighbor(i, |_, j| {
                if self.mask[j] && dist[j] == usize::MAX {
                    dist[j] = d + 1;
                    queue.push_back(j);
                }
            });
        }
        dist
    }

    /// Short content hash identifying the grid and its mask.
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(write_dmask(self).as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Same mask with all lengths scaled by `factor` (spacing `h -> factor h`).
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        GridDomain::new(
            self.dim,
            self.shape.clone(),
            self.spacing * factor,
            self.mask.clone(),
        )
    }

    /// Same domain on a grid enlarged by `cells` inactive cells on every side.
    /// Cell centres keep their physical positions.
    pub fn padded(&self, cells: usize) -> Result<Self> {
        let shape: Vec<usize> = self.shape.iter().map(|n| n + 2 * cells).collect();
        let mut strides = [1usize; 3];
        for a in (0..self.dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let mut mask = vec![false; shape.iter().product()];
        for idx in self.active_indices() {
            let c = self.coords(idx);
            let t: usize = (0..self.dim).map(|a| (c[a] + cells) * strides[a]).sum();
            mask[t] = true;
        }
        GridDomain::new(self.dim, shape, self.spacing, mask)
    }

    /// Mask shifted by whole cells; cells shifted onto the margin are an error.
    pub fn translated(&self, offset: &[isize]) -> Result<Self> {
        let mut mask = vec![false; self.mask.len()];
        for idx in 0..self.mask.len() {
            if !self.mask[idx] {
                continue;
            }
            let c = self.coords(idx);
            let mut target = [0usize; 3];
            for a in 0..self.dim {
                let t = c[a] as isize + offset[a];
                if t < 0 || t >= self.shape[a] as isize {
                    return Err(Error::OutOfGrid {
                        required_padding: offset[a].unsigned_abs(),
                    });
                }
                target[a] = t as usize;
            }
            mask[self.index(&target[..self.dim])] = true;
        }
        self.with_mask(mask)
    }

    /// Cell mask of the open ball `|x - center| < radius` on this grid, or an
    /// error if the ball reaches the margin layer.
    pub fn ball_mask(&self, center: &[f64], radius: f64) -> Result<Vec<bool>> {
        let h = self.spacing;
        let mut padding = 0usize;
        for a in 0..self.dim {
            let half = self.shape[a] as f64 * h / 2.0;
            // Outer-layer centres sit at +-(half - h/2); the ball must stay off them.
            let reach = center[a].abs() + radius;
            let limit = half - 0.5 * h;
            if reach >= limit {
                padding = padding.max(((reach - limit) / h).floor() as usize + 1);
            }
        }
        if padding > 0 {
            return Err(Error::OutOfGrid {
                required_padding: padding,
            });
        }
        let r2 = radius * radius;
        Ok((0..self.mask.len())
            .map(|i| {
                let x = self.cell_center(i);
                let d2: f64 = (0..self.dim).map(|a| (x[a] - center[a]).powi(2)).sum();
                d2 < r2
            })
            .collect())
    }

    /// DMASK text serialisation.
    pub fn to_dmask(&self) -> String {
        write_dmask(self)
    }
}

/// Centre computation shared by grids under construction.
pub(crate) struct GridLayout<'a> {
    pub dim: usize,
    pub shape: &'a [usize],
    pub spacing: f64,
}

impl GridLayout<'_> {
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        let mut rem = idx;
        let mut stride: usize = self.shape.iter().product();
        for a in 0..self.dim {
            stride /= self.shape[a];
            let i = rem / stride;
            rem %= stride;
            x[a] = (i as f64 + 0.5 - self.shape[a] as f64 / 2.0) * self.spacing;
        }
        x
    }
}

fn components_of(domain: &GridDomain, mask: &[bool]) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; mask.len()];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut cells = vec![start];
        label[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            if domain.on_outer_layer(i) {
                continue;
            }
            domain.for_each_neighbor(i, |_, j| {
                if mask[j] && label[j] == usize::MAX {
                    label[j] = id;
                    cells.push(j);
                    queue.push_back(j);
                }
            });
        }
        cells.sort_unstable();
        comps.push(cells);
    }
    comps
}

/// A set of grid cells, typically an excision region `A`.
///
/// A region may include cells outside its parent domain; only `A ∩ Ω` matters
/// to the operations that consume it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    mask: Vec<bool>,
    parent_shape: Vec<usize>,
}

impl Region {
    pub fn empty(domain: &GridDomain) -> Self {
        Region {
            mask: vec![false; domain.n_cells()],
            parent_shape: domain.shape().to_vec(),
        }
    }

    pub fn from_mask(domain: &GridDomain, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != domain.n_cells() {
            return Err(Error::GridMismatch {
                expected: domain.shape().to_vec(),
                found: vec![mask.len()],
            });
        }
        Ok(Region {
            mask,
            parent_shape: domain.shape().to_vec(),
        })
    }

    /// The whole active set of `domain` as a region.
    pub fn all_of(domain: &GridDomain) -> Self {
        Region {
            mask: domain.mask().to_vec(),
            parent_shape: domain.shape().to_vec(),
        }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn parent_shape(&self) -> &[usize] {
        &self.parent_shape
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn check_grid(&self, domain: &GridDomain) -> Result<()> {
        if self.parent_shape != domain.shape() {
            return Err(Error::GridMismatch {
                expected: domain.shape().to_vec(),
                found: self.parent_shape.clone(),
            });
        }
        Ok(())
    }

    /// Cells of the region that are active in `domain`.
    pub fn intersection_count(&self, domain: &GridDomain) -> usize {
        self.mask
            .iter()
            .zip(domain.mask())
            .filter(|(&a, &d)| a && d)
            .count()
    }

    pub fn union(&self, other: &Region) -> Result<Region> {
        self.same_grid(other)?;
        Ok(Region {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a || b)
                .collect(),
            parent_shape: self.parent_shape.clone(),
        })
    }

    pub fn intersection(&self, other: &Region) -> Result<Region> {
        self.same_grid(other)?;
        Ok(Region {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a && b)
                .collect(),
            parent_shape: self.parent_shape.clone(),
        })
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.parent_shape == other.parent_shape
            && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    /// One-cell face dilation, used for closure-sensitivity studies.
    pub fn dilated(&self, domain: &GridDomain) -> Result<Region> {
        self.check_grid(domain)?;
        let mut mask = self.mask.clone();
        for (i, &m) in self.mask.iter().enumerate() {
            if m && !domain.on_outer_layer(i) {
                domain.for_each_neighbor(i, |_, j| mask[j] = true);
            }
        }
        Ok(Region {
            mask,
            parent_shape: self.parent_shape.clone(),
        })
    }

    /// Short content hash of the mask and grid shape.
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        let shape: Vec<String> = self.parent_shape.iter().map(|n| n.to_string()).collect();
        hasher.update(shape.join(" ").as_bytes());
        hasher.update(b"\n");
        hasher.update(
            self.mask
                .iter()
                .map(|&m| if m { b'1' } else { b'0' })
                .collect::<Vec<u8>>(),
        );
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn same_grid(&self, other: &Region) -> Result<()> {
        if self.parent_shape != other.parent_shape {
            return Err(Error::GridMismatch {
                expected: self.parent_shape.clone(),
                found: other.parent_shape.clone(),
            });
        }
        Ok(())
    }
}

/// `Ω ∖ A`. Region cells outside `Ω` are ignored; the result may be disconnected.
pub fn excise(domain: &GridDomain, region: &Region) -> Result<GridDomain> {
    region.check_grid(domain)?;
    let mask: Vec<bool> = domain
        .mask()
        .iter()
        .zip(region.mask())
        .map(|(&d, &a)| d && !a)
        .collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyDomain(
            "excision removes every active cell".into(),
        ));
    }
    domain.with_mask(mask)
}

/// `Ω ∪ B(center, radius)` on the same grid.
pub fn union_ball(domain: &GridDomain, center: &[f64], radius: f64) -> Result<GridDomain> {
    let ball = domain.ball_mask(center, radius)?;
    let mask = domain
        .mask()
        .iter()
        .zip(&ball)
        .map(|(&d, &b)| d || b)
        .collect();
    domain.with_mask(mask)
}

/// Intersection of two domains on the same grid.
pub fn intersect(a: &GridDomain, b: &GridDomain) -> Result<GridDomain> {
    if a.shape() != b.shape() {
        return Err(Error::GridMismatch {
            expected: a.shape().to_vec(),
            found: b.shape().to_vec(),
        });
    }
    let mask: Vec<bool> = a.mask().iter().zip(b.mask()).map(|(&x, &y)| x && y).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyDomain("empty intersection".into()));
    }
    a.with_mask(mask)
}

/// Volume and raw staircase perimeter of a domain.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Measure {
    pub volume: f64,
    /// Face count between active and inactive cells times `h^(dim-1)`.
    pub perimeter: f64,
}

impl Measure {
    /// Staircase perimeter divided by [`staircase_correction`].
    pub fn corrected_perimeter(&self, dim: usize) -> f64 {
        self.perimeter / staircase_correction(dim)
    }
}

pub fn measure(domain: &GridDomain) -> Measure {
    let mut faces = 0usize;
    for (i, &m) in domain.mask().iter().enumerate() {
        if m {
            domain.for_each_neighbor(i, |_, j| {
                if !domain.is_active(j) {
                    faces += 1;
                }
            });
        }
    }
    Measure {
        volume: domain.volume(),
        perimeter: faces as f64 * domain.spacing().powi(domain.dim() as i32 - 1),
    }
}
