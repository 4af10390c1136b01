//! Experiment configuration: one JSON file describes a whole run.

use anyhow::Context;
use serde::{Deserialize, Deserializer, Serialize};

use caplab_core::domain::{
    annulus_region, ball_region, box_region, make_ball, make_box, make_ellipsoid, random_blob,
    two_balls, GridDomain, Region, SpikedBall,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    Capacity,
    TheoremCheck,
    ProofDiagnostics,
    FaberKrahn,
    LemmaSuite,
    ConvergenceStudy,
}

/// Grid spacing, either a number or a fraction string such as `"1/128"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Spacing(pub f64);

impl<'de> Deserialize<'de> for Spacing {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let v = match Raw::deserialize(d)? {
            Raw::Num(x) => x,
            Raw::Text(s) => parse_fraction(&s).map_err(serde::de::Error::custom)?,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(serde::de::Error::custom(format!("spacing must be positive, got {v}")));
        }
        Ok(Spacing(v))
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let bad = || format!("expected a number or \"p/q\", got {s:?}");
    match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let q: f64 = q.trim().parse().map_err(|_| bad())?;
            Ok(p / q)
        }
        None => s.trim().parse().map_err(|_| bad()),
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Geometry {
    Box {
        sides: Vec<f64>,
    },
    Disk {
        #[serde(default = "one")]
        radius: f64,
    },
    Ball {
        dim: usize,
        #[serde(default = "one")]
        radius: f64,
    },
    Ellipsoid {
        semi_axes: Vec<f64>,
    },
    SpikedBall {
        dim: usize,
        #[serde(default = "one")]
        radius: f64,
        spike_len: f64,
        spike_width: f64,
        #[serde(default)]
        padding: Option<f64>,
    },
    TwoBalls {
        dim: usize,
        radius: f64,
        separation: f64,
    },
    /// Seeded from the run seed.
    RandomBlob {
        dim: usize,
    },
}

impl Geometry {
    pub fn build(&self, h: f64, seed: u64) -> caplab_core::Result<GridDomain> {
        match self {
            Geometry::Box { sides } => make_box(sides.len(), sides, h),
            Geometry::Disk { radius } => make_ball(2, *radius, h),
            Geometry::Ball { dim, radius } => make_ball(*dim, *radius, h),
            Geometry::Ellipsoid { semi_axes } => make_ellipsoid(semi_axes.len(), semi_axes, None, h),
            Geometry::SpikedBall { .. } => self.spiked(h).expect("spiked ball").build(),
            Geometry::TwoBalls {
                dim,
                radius,
                separation,
            } => two_balls(*dim, *radius, *separation, h),
            Geometry::RandomBlob { dim } => random_blob(seed, *dim, h),
        }
    }

    pub fn spiked(&self, h: f64) -> Option<SpikedBall> {
        match *self {
            Geometry::SpikedBall {
                dim,
                radius,
                spike_len,
                spike_width,
                padding,
            } => {
                let sb = SpikedBall::new(dim, radius, spike_len, spike_width, h);
                Some(match padding {
                    Some(p) => sb.padding(p),
                    None => sb,
                })
            }
            _ => None,
        }
    }

    /// Short label for CSV rows.
    pub fn label(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Geometry::Box { sides } => format!("box({})", list(sides)),
            Geometry::Disk { radius } => format!("disk({radius})"),
            Geometry::Ball { dim, radius } => format!("ball{dim}({radius})"),
            Geometry::Ellipsoid { semi_axes } => format!("ellipsoid({})", list(semi_axes)),
            Geometry::SpikedBall {
                dim,
                radius,
                spike_len,
                spike_width,
                ..
            } => format!("spiked-ball{dim}({radius},{spike_len},{spike_width})"),
            Geometry::TwoBalls {
                dim,
                radius,
                separation,
            } => format!("two-balls{dim}({radius},{separation})"),
            Geometry::RandomBlob { dim } => format!("random-blob{dim}"),
        }
    }
}

/// Excision region `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegionSpec {
    Ball {
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    /// Concentric with the origin.
    Annulus { r_in: f64, r_out: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Empty,
}

impl RegionSpec {
    pub fn build(&self, domain: &GridDomain) -> caplab_core::Result<Region> {
        let dim = domain.dim();
        let check_len = |v: &[f64], what: &str| {
            if v.len() == dim {
                Ok(())
            } else {
                Err(caplab_core::Error::InvalidParameter(format!(
                    "region {what} has {} coordinates in dimension {dim}",
                    v.len()
                )))
            }
        };
        match self {
            RegionSpec::Ball { center, radius } => {
                let c = center.clone().unwrap_or_else(|| vec![0.0; dim]);
                check_len(&c, "center")?;
                ball_region(domain, &c, *radius)
            }
            RegionSpec::Annulus { r_in, r_out } => annulus_region(domain, *r_in, *r_out),
            RegionSpec::Box { lo, hi } => {
                check_len(lo, "lo")?;
                check_len(hi, "hi")?;
                box_region(domain, lo, hi)
            }
            RegionSpec::Empty => Ok(Region::empty(domain)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            RegionSpec::Ball { center, radius } => match center {
                Some(c) => format!("ball({radius}@{c:?})"),
                None => format!("ball({radius})"),
            },
            RegionSpec::Annulus { r_in, r_out } => format!("annulus({r_in},{r_out})"),
            RegionSpec::Box { lo, hi } => format!("box({lo:?},{hi:?})"),
            RegionSpec::Empty => "empty".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative eigen-residual `‖Lφ − λφ‖ ≤ tol·λ`.
    pub eigen: f64,
    /// Relative residual of the harmonic-extension solve.
    pub capacity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eigen: 1e-9,
            capacity: 1e-10,
        }
    }
}

/// Overrides for constants the theory leaves undisplayed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// Hall's dimensional constant `c(n)`.
    #[serde(default)]
    pub c_n: Option<f64>,
    /// `c₁(n)`, defaulting to `c(n) + 2n`.
    #[serde(default)]
    pub c1_n: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    /// File stem for `<stem>.json`, `<stem>.csv` and `<stem>.svg`.
    pub stem: String,
    /// Also write eigenfunctions as a binary sidecar (`spectrum` only).
    pub sidecar: bool,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            stem: "report".into(),
            sidecar: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FkMode {
    /// Hall deficit, isoperimetric and volume bounds, discrete Faber–Krahn.
    Deficit,
    Transplant,
    Stability,
    HallFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaberKrahnOptions {
    pub mode: FkMode,
    /// Spike widths of the stability family.
    #[serde(default)]
    pub spike_widths: Vec<f64>,
    /// Linear scale applied to every member of the stability family.
    #[serde(default = "one")]
    pub scale: f64,
    /// Calibration aspect ratios for `hall-fit`.
    #[serde(default)]
    pub aspects: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Lambda,
    Volume,
    Capacity,
}

fn default_k() -> usize {
    1
}

fn default_margin() -> usize {
    1
}

fn default_trials() -> usize {
    1000
}

fn default_quantities() -> Vec<Quantity> {
    vec![Quantity::Lambda]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub geometry: Option<Geometry>,
    #[serde(default)]
    pub h: Option<Spacing>,
    #[serde(default)]
    pub h_list: Option<Vec<Spacing>>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Single excision region; merged in front of `holes`.
    #[serde(default, skip_serializing)]
    pub hole: Option<RegionSpec>,
    #[serde(default)]
    pub holes: Vec<RegionSpec>,
    /// Boundary margin (in cells) for the ratio bounds `m_k`, `M_k`.
    #[serde(default = "default_margin")]
    pub margin: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub faber_krahn: Option<FaberKrahnOptions>,
    #[serde(default = "default_quantities")]
    pub quantities: Vec<Quantity>,
}

/// A configuration problem; maps to its own exit code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl ExperimentConfig {
    /// Parses and validates, reporting schema violations with their field path.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(format!("at `{path}`: {}", e.inner()))
        })?;
        if let Some(h) = cfg.hole.take() {
            cfg.holes.insert(0, h);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply_seed_override(&mut self, var: Option<String>) -> anyhow::Result<()> {
        if let Some(v) = var {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| config_err(format!("CAPLAB_SEED must be an unsigned integer, got {v:?}")))?;
        }
        Ok(())
    }

    fn validate(&self) -> anyhow::Result<()> {
        use Command::*;
        let needs_geometry = !matches!(self.command, LemmaSuite)
            && !matches!(&self.faber_krahn, Some(o) if o.mode == FkMode::HallFit && self.command == FaberKrahn);
        if needs_geometry && self.geometry.is_none() {
            return Err(config_err(format!("`geometry` is required for {:?}", self.command)));
        }
        if self.k == 0 {
            return Err(config_err("`k` must be at least 1"));
        }
        if self.margin == 0 {
            return Err(config_err("`margin` must be at least 1"));
        }
        let t = &self.tolerances;
        if !(t.eigen > 0.0 && t.capacity > 0.0) {
            return Err(config_err("tolerances must be positive"));
        }
        if self.output.stem.is_empty()
            || self.output.stem.contains(['/', '\\'])
            || self.output.stem.starts_with('.')
        {
            return Err(config_err("`output.stem` must be a plain file name"));
        }
        match self.command {
            ConvergenceStudy => {
                let n = self.h_list.as_ref().map_or(0, |v| v.len());
                if n < 3 {
                    return Err(config_err(format!(
                        "`h_list` needs at least 3 mesh sizes for a convergence study, got {n}"
                    )));
                }
                if self.quantities.contains(&Quantity::Capacity) && self.holes.is_empty() {
                    return Err(config_err("the capacity quantity needs a `hole`"));
                }
            }
            LemmaSuite => {
                if self.trials == 0 {
                    return Err(config_err("`trials` must be positive"));
                }
            }
            _ => {
                if self.h.is_none() && needs_geometry {
                    return Err(config_err(format!("`h` is required for {:?}", self.command)));
                }
            }
        }
        if matches!(self.command, Capacity | TheoremCheck | ProofDiagnostics) && self.holes.is_empty() {
            return Err(config_err("at least one `hole` is required"));
        }
        if self.command == FaberKrahn {
            let Some(o) = &self.faber_krahn else {
                return Err(config_err("`faber_krahn` options are required"));
            };
            match o.mode {
                FkMode::Stability => {
                    if !matches!(self.geometry, Some(Geometry::SpikedBall { .. })) {
                        return Err(config_err("stability needs a spiked-ball geometry"));
                    }
                    if o.spike_widths.len() < 3 {
                        return Err(config_err("stability needs at least 3 `spike_widths`"));
                    }
                    if self.constants.c_n.is_none() {
                        return Err(config_err(
                            "stability needs `constants.c_n` (see the hall-fit mode)"
                        ));
                    }
                }
                FkMode::HallFit => {
                    if o.aspects.is_empty() {
                        return Err(config_err("hall-fit needs `aspects`"));
                    }
                    if self.h.is_none() {
                        return Err(config_err("`h` is required for hall-fit"));
                    }
                }
                FkMode::Deficit | FkMode::Transplant => {}
            }
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.h.expect("validated").0
    }
}
