//! Verification suites: structural identities of the operators, empirical
//! constants of the inequalities behind the degree bound, minimizer
//! diagnostics and the excess-degree trend experiment.
//!
//! Every suite is deterministic for a fixed [`VerifyConfig`]: random families
//! come from a seeded ChaCha8 stream and all parallel work is collected in
//! order before any reduction.

use std::collections::BTreeMap;
use std::io::Write;

use log::info;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degree::{
    degree_sweep, degree_winding, excess_degree_integral, negative_degree_integral, target_grid, winding_of_polygon,
    DegreeOptions, Domain, FnMap, GridMap, SampledMap, Winding,
};
use crate::diagnostics::{diagnose, probe_exponents, Ball, Diagnostics, Profile};
use crate::energy::{energy, flatten, Objective};
use crate::error::{Error, Result};
use crate::form::{FormField, Interpolator};
use crate::frame::{hs_norm, Frame};
use crate::glue::{glue_frames, FrameSource, GlueSpec, Glued, Radii};
use crate::grid::{ball_volume, norm, sphere_area, sub, Annulus, Grid, Point, Region};
use crate::homotopy::{nodes_within, Homotopy, HomotopyConfig};
use crate::linalg::{self, Mat};
use crate::minimize::{minimize, objective_for, MinimizeOptions, MinimizeRun, Status};
use crate::sphere::{fibonacci_directions, sphere_quadrature};
use crate::zoo::{ZooKind, ZooMap};

/// Suite names in run order.
pub const SUITES: &[&str] = &[
    "cht",
    "exactness",
    "sobolev_poincare",
    "isoperimetric",
    "jacobian_bound",
    "negative_degree",
    "continuity",
    "degree_bound",
    "frame_bound",
    "degree",
    "excess",
    "glue",
    "minimizer",
    "trend",
];

/// Number of random forms in the chain-homotopy family.
pub const CHT_FORMS: usize = 20;
pub const CHT_RATIO: (f64, f64) = (1.4, 2.6);
pub const CHT_RELATIVE: f64 = 0.05;
/// Sup-variation bound of `𝒯_r df − f`, in grid spacings.
pub const EXACTNESS_SPACINGS: f64 = 10.0;
pub const EXCESS_TOLERANCE: f64 = 0.02;
pub const ORACLE_TOLERANCE: f64 = 0.005;
pub const EL_TOLERANCE: f64 = 1e-3;
pub const GRADIENT_TOLERANCE: f64 = 1e-5;
pub const GRADIENT_COORDINATES: usize = 100;
pub const RATIO_STABILITY: f64 = 0.2;
pub const TREND_BAND: f64 = 2.0;
pub const TREND_STABILITY: f64 = 0.25;
/// Isoperimetric constants may exceed the sharp one by this factor.
pub const ISOPERIMETRIC_SLACK: f64 = 1.05;
/// Grid resolution of the planar suites.
pub const PLANAR_RES: usize = 128;
/// Target resolution of the excess-degree sweep for `z²`.
pub const EXCESS_RES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub n: usize,
    /// Finest grid resolution per axis.
    pub res: usize,
    /// Number of resolutions in the chain-homotopy suite, halving from `res`.
    pub refine: usize,
    pub seed: u64,
    /// Suites to run; empty runs all.
    pub only: Vec<String>,
    pub q: f64,
    /// Distortion bound of the minimizer suite.
    pub k: f64,
    /// Distortion bound of the trend experiment.
    pub k_trend: f64,
    pub radii: [f64; 4],
    pub max_iter: usize,
    /// Iteration budget of each trend minimization.
    pub trend_iter: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n: 3,
            res: 48,
            refine: 1,
            seed: 0,
            only: Vec::new(),
            q: 2.0,
            k: 4.0,
            k_trend: 32.0,
            radii: [0.5, 0.75, 1.25, 1.5],
            max_iter: 20_000,
            trend_iter: 8000,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n != 2 && self.n != 3 {
            return Err(Error::invalid("n", format!("dimension {} not in {{2,3}}", self.n)));
        }
        if self.refine == 0 || self.refine > 4 {
            return Err(Error::invalid(
                "refine",
                format!("need 1 ≤ refine ≤ 4, got {}", self.refine),
            ));
        }
        if self.res < 16 || self.res >> (self.refine - 1) < 12 {
            return Err(Error::invalid(
                "res",
                format!("{} is too coarse for {} resolution(s)", self.res, self.refine),
            ));
        }
        if !(self.q >= 1.0 && self.q.is_finite()) {
            return Err(Error::invalid("q", format!("need q ≥ 1, got {}", self.q)));
        }
        if !(self.k >= 1.0 && self.k.is_finite()) {
            return Err(Error::invalid("k", format!("need K ≥ 1, got {}", self.k)));
        }
        if !(self.k_trend >= 1.0 && self.k_trend.is_finite()) {
            return Err(Error::invalid("k_trend", format!("need K ≥ 1, got {}", self.k_trend)));
        }
        Radii::from_slice(&self.radii)?;
        if self.max_iter == 0 || self.trend_iter == 0 {
            return Err(Error::invalid("max_iter", "iteration budgets must be positive"));
        }
        for s in &self.only {
            if !SUITES.contains(&s.as_str()) {
                return Err(Error::invalid(
                    "only",
                    format!("unknown suite `{s}`; known: {}", SUITES.join(", ")),
                ));
            }
        }
        Ok(())
    }

    pub fn suites(&self) -> Vec<&'static str> {
        SUITES
            .iter()
            .copied()
            .filter(|s| self.only.is_empty() || self.only.iter().any(|o| o == s))
            .collect()
    }

    fn radii(&self) -> Radii {
        Radii::from_slice(&self.radii).expect("validated")
    }

    /// Half-width of the box holding the glued frames.
    fn half_width(&self) -> f64 {
        self.radii[3] * 16.0 / 15.0
    }

    /// The finest resolution and the one below it, at ratio 3/4.
    fn refinement_pair(&self) -> [usize; 2] {
        [(self.res * 3 / 4).max(12), self.res]
    }
}

/// One inequality or identity: `lhs` against `rhs`, with an empirical
/// constant when the bound has one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: Option<f64>,
    pub pass: bool,
    /// Structural checks; a failure makes the run fail.
    pub hard: bool,
}

impl Check {
    fn new(name: impl Into<String>, lhs: f64, rhs: f64, pass: bool, hard: bool) -> Self {
        Check {
            name: name.into(),
            lhs,
            rhs,
            constant: None,
            pass,
            hard,
        }
    }

    /// `lhs ≤ rhs`.
    fn at_most(name: impl Into<String>, lhs: f64, rhs: f64, hard: bool) -> Self {
        Check::new(name, lhs, rhs, lhs <= rhs, hard)
    }

    fn with_constant(mut self, c: f64) -> Self {
        self.constant = Some(c);
        self
    }
}

/// A CSV table with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$(($x).to_string()),*] };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub checks: Vec<Check>,
    /// Reported quantities such as empirical constants.
    pub values: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        SuiteReport {
            name: name.to_string(),
            checks: Vec::new(),
            values: BTreeMap::new(),
            tables: Vec::new(),
        }
    }

    fn value(&mut self, key: impl Into<String>, v: f64) {
        self.values.insert(key.into(), v);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub version: String,
    pub config: VerifyConfig,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn suite(&self, name: &str) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.name == name)
    }

    /// Failing hard checks as `suite/check`.
    pub fn hard_failures(&self) -> Vec<String> {
        self.suites
            .iter()
            .flat_map(|s| {
                s.checks
                    .iter()
                    .filter(|c| c.hard && !c.pass)
                    .map(move |c| format!("{}/{}", s.name, c.name))
            })
            .collect()
    }

    pub fn soft_failures(&self) -> Vec<String> {
        self.suites
            .iter()
            .flat_map(|s| {
                s.checks
                    .iter()
                    .filter(|c| !c.hard && !c.pass)
                    .map(move |c| format!("{}/{}", s.name, c.name))
            })
            .collect()
    }

    pub fn write_checks_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "suite,check,lhs,rhs,constant,pass,hard")?;
        for s in &self.suites {
            for c in &s.checks {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    s.name,
                    c.name,
                    num(c.lhs),
                    num(c.rhs),
                    c.constant.map(num).unwrap_or_default(),
                    c.pass,
                    c.hard
                )?;
            }
        }
        Ok(())
    }
}

/// Runs the selected suites in order.
pub fn run(config: &VerifyConfig) -> Result<VerifyReport> {
    config.validate()?;
    let suites = config
        .suites()
        .into_iter()
        .map(|name| {
            info!("suite {name}");
            run_suite(name, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        suites,
    })
}

pub fn run_suite(name: &str, config: &VerifyConfig) -> Result<SuiteReport> {
    match name {
        "cht" => chain_homotopy(config),
        "exactness" => exactness(config),
        "sobolev_poincare" => sobolev_poincare(config),
        "isoperimetric" => isoperimetric(config),
        "jacobian_bound" => jacobian_bound(config),
        "negative_degree" => negative_degree(config),
        "continuity" => continuity(config),
        "degree_bound" => degree_bound(config),
        "frame_bound" => frame_bound(config),
        "degree" => degree_identities(),
        "excess" => excess(),
        "glue" => glue(config),
        "minimizer" => minimizer(config),
        "trend" => trend(config),
        other => Err(Error::invalid("only", format!("unknown suite `{other}`"))),
    }
}

/// Monomial exponents of total degree at most `d` in `n` variables.
fn monomials(n: usize, d: i32) -> Vec<[i32; 3]> {
    let mut out = Vec::new();
    for a in 0..=d {
        for b in 0..=d {
            for c in 0..=d {
                let m = [a, b, c * i32::from(n == 3)];
                if (n == 3 || c == 0) && m.iter().sum::<i32>() <= d {
                    out.push(m);
                }
            }
        }
    }
    out
}

/// Coefficients of `count` random cubic 1-forms, uniform in `[−1, 1]`.
pub fn random_cubic_coefficients(n: usize, count: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mons = monomials(n, 3);
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| mons.iter().map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect()
}

/// The cubic 1-forms with the given coefficients, sampled on `grid`.
pub fn cubic_forms(grid: &Grid, coefficients: &[Vec<Vec<f64>>]) -> Result<Vec<FormField>> {
    let n = grid.dim();
    let mons = monomials(n, 3);
    coefficients
        .iter()
        .map(|form| {
            FormField::from_fn(grid, 1, |p| {
                form.iter()
                    .map(|c| {
                        mons.iter()
                            .zip(c)
                            .map(|(m, k)| k * (0..n).map(|a| p[a].powi(m[a])).product::<f64>())
                            .sum()
                    })
                    .collect()
            })
        })
        .collect()
}

fn sup_within(grid: &Grid, values: &[f64], center: &Point, radius: f64) -> f64 {
    nodes_within(grid, center, radius)
        .iter()
        .map(|&i| values[i])
        .fold(0.0, f64::max)
}

fn chain_homotopy(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("cht");
    let n = cfg.n;
    let coefficients = random_cubic_coefficients(n, CHT_FORMS, cfg.seed);
    let resolutions: Vec<usize> = (0..cfg.refine).rev().map(|j| cfg.res >> j).collect();
    let op = Homotopy::unit(n);
    let mut table = Table::new("residuals", &["form", "res", "residual", "sup_form"]);
    let mut residuals = Vec::new();
    let mut sups = Vec::new();
    for &res in &resolutions {
        let grid = Grid::cube(n, res, 1.0)?;
        let forms = cubic_forms(&grid, &coefficients)?;
        let r = op.chain_residuals(&forms)?;
        let s: Vec<f64> = forms
            .iter()
            .map(|f| sup_within(&grid, &f.pointwise_norm(), &[0.0; 3], 0.5))
            .collect();
        for (k, (a, b)) in r.iter().zip(&s).enumerate() {
            table.push(row![k, res, num(*a), num(*b)]);
        }
        residuals.push(r);
        sups.push(s);
    }
    let finest = residuals.len() - 1;
    let relative = residuals[finest]
        .iter()
        .zip(&sups[finest])
        .map(|(r, s)| r / s)
        .fold(0.0, f64::max);
    rep.checks.push(Check::at_most(
        format!("residual_at_{}", resolutions[finest]),
        relative,
        CHT_RELATIVE,
        true,
    ));
    rep.value("max_relative_residual", relative);
    if resolutions.len() >= 2 {
        let mut ratios_table = Table::new("ratios", &["form", "coarse", "fine", "ratio"]);
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for j in 1..resolutions.len() {
            for k in 0..CHT_FORMS {
                let ratio = residuals[j - 1][k] / residuals[j][k];
                lo = lo.min(ratio);
                hi = hi.max(ratio);
                ratios_table.push(row![k, resolutions[j - 1], resolutions[j], num(ratio)]);
            }
        }
        rep.checks.push(Check::new(
            "refinement_ratio",
            lo,
            hi,
            lo >= CHT_RATIO.0 && hi <= CHT_RATIO.1,
            true,
        ));
        rep.value("ratio_min", lo);
        rep.value("ratio_max", hi);
        rep.value("observed_order", (lo * hi).sqrt().log2());
        rep.tables.push(ratios_table);
    }
    rep.tables.push(table);
    Ok(rep)
}

/// `f(x − shift)` for a zoo map.
#[derive(Debug, Clone, Copy)]
struct Shifted {
    map: ZooMap,
    shift: Point,
}

impl Shifted {
    fn eval(&self, x: &Point) -> Point {
        self.map.eval(&sub(x, &self.shift))
    }

    fn derivative(&self, x: &Point) -> Mat {
        self.map.derivative(&sub(x, &self.shift))
    }
}

fn exactness(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("exactness");
    let cases = [
        ("identity_2d", ZooMap::new(ZooKind::Identity, 2), [0.0; 3]),
        ("identity_3d", ZooMap::new(ZooKind::Identity, 3), [0.0; 3]),
        ("z_squared", ZooMap::new(ZooKind::Winding2d { k: 2 }, 2), [0.0; 3]),
        // The axis passes through (0.8, 0, z), away from B(1/4).
        (
            "winding3d_k2_off_axis",
            ZooMap::new(ZooKind::Winding3d { k: 2 }, 3),
            [0.8, 0.0, 0.0],
        ),
    ];
    let r = 1.0;
    let mut table = Table::new("variation", &["case", "h", "variation", "bound", "constant_1"]);
    for (name, map, shift) in cases {
        let n = map.n;
        let res = if n == 2 { 2 * cfg.res } else { cfg.res };
        let grid = Grid::cube(n, res, 0.3)?;
        let f = Shifted { map, shift };
        let frame = Frame::from_matrix_fn(&grid, |p| f.derivative(p));
        let op = Homotopy::new(n, HomotopyConfig::default(), r, [0.0; 3])?;
        let nodes = nodes_within(&grid, &[0.0; 3], 0.25 * r);
        let pot = op.potential_map(&frame, &nodes)?;
        let mut variation: f64 = 0.0;
        let mut first = 0.0;
        for a in 0..n {
            let diffs: Vec<f64> = nodes.iter().map(|&i| pot[a][i] - f.eval(&grid.point(i))[a]).collect();
            let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            variation = variation.max(hi - lo);
            if a == 0 {
                first = diffs[0];
            }
        }
        let bound = EXACTNESS_SPACINGS * grid.spacing();
        table.push(row![name, num(grid.spacing()), num(variation), num(bound), num(first)]);
        rep.checks.push(Check::at_most(name, variation, bound, true));
    }
    rep.tables.push(table);
    Ok(rep)
}

fn sobolev_poincare(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("sobolev_poincare");
    let n = cfg.n;
    let p = if n == 3 { 1.5 } else { 4.0 / 3.0 };
    let p_star = n as f64 * p / (n as f64 - p);
    let grid = Grid::cube(n, cfg.res, 1.0)?;
    let coefficients = random_cubic_coefficients(n, 6, cfg.seed.wrapping_add(1));
    let forms = cubic_forms(&grid, &coefficients)?;
    let dforms = forms
        .iter()
        .map(FormField::exterior_derivative)
        .collect::<Result<Vec<_>>>()?;
    let radius = 0.9;
    let region = Region::centered_ball(radius);
    let quad = grid.quadrature(&region)?;
    let nodes = nodes_within(&grid, &[0.0; 3], radius);
    let op = Homotopy::unit(n);
    let t = op.apply_many(&dforms.iter().collect::<Vec<_>>(), &nodes)?;
    let mut table = Table::new("ratios", &["form", "lhs", "rhs", "ratio"]);
    let mut c: f64 = 0.0;
    for (k, (td, d)) in t.iter().zip(&dforms).enumerate() {
        let lhs = quad.lp(&td.form.pointwise_norm(), p_star);
        let rhs = quad.lp(&d.pointwise_norm(), p);
        c = c.max(lhs / rhs);
        table.push(row![k, num(lhs), num(rhs), num(lhs / rhs)]);
    }
    rep.value("p", p);
    rep.value("p_star", p_star);
    rep.value("constant", c);
    rep.checks
        .push(Check::new("constant_finite", c, f64::INFINITY, c.is_finite(), false).with_constant(c));
    rep.tables.push(table);
    Ok(rep)
}

fn zoo_family(n: usize) -> Vec<ZooMap> {
    let winding = |k| {
        if n == 2 {
            ZooKind::Winding2d { k }
        } else {
            ZooKind::Winding3d { k }
        }
    };
    [
        ZooKind::Identity,
        ZooKind::Scaling { c: 2.0 },
        winding(2),
        winding(3),
        ZooKind::RadialStretch { alpha: 2.0 },
        ZooKind::RadialStretch { alpha: 3.0 },
        ZooKind::Fold { a: 0.5 },
    ]
    .into_iter()
    .map(|k| ZooMap::new(k, n))
    .collect()
}

fn winding_map(n: usize, k: u32) -> ZooMap {
    if n == 2 {
        ZooMap::new(ZooKind::Winding2d { k }, 2)
    } else {
        ZooMap::new(ZooKind::Winding3d { k }, 3)
    }
}

/// Isoperimetric constants over the zoo. Maps whose Jacobian changes sign
/// are measured with `|∫_B J|`, since `∫_B |J|` counts folded sheets twice.
fn isoperimetric(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("isoperimetric");
    let mut table = Table::new(
        "constants",
        &[
            "n",
            "map",
            "center_x",
            "radius",
            "abs_jacobian",
            "signed_jacobian",
            "rhs",
            "constant",
        ],
    );
    let mut worst_excess: f64 = 0.0;
    for n in [2, 3] {
        let e = n as f64 / (n as f64 - 1.0);
        let sharp = ball_volume(n, 1.0) / sphere_area(n, 1.0).powf(e);
        let res = if n == 2 { 4 * cfg.res } else { cfg.res };
        let grid = Grid::cube(n, res, 1.0)?;
        let (dirs, weights) = sphere_quadrature(n, if n == 2 { 512 } else { 96 });
        let mut c_max: f64 = 0.0;
        for map in zoo_family(n) {
            for (center, radius) in [([0.0; 3], 0.8), ([0.3, -0.2, 0.1], 0.5)] {
                let quad = grid.quadrature(&Region::ball(center, radius))?;
                let mut jac = vec![0.0; grid.len()];
                for &i in &quad.nodes {
                    jac[i] = linalg::det(n, &map.derivative(&grid.point(i)));
                }
                let absolute = quad.integrate_with(|i| jac[i].abs());
                let signed = quad.integrate(&jac);
                let lhs = if jac.iter().all(|&j| j >= 0.0) {
                    absolute
                } else {
                    signed.abs()
                };
                let surface = dirs
                    .iter()
                    .zip(&weights)
                    .map(|(u, w)| {
                        let mut x = center;
                        for a in 0..n {
                            x[a] += radius * u[a];
                        }
                        w * linalg::spectral_norm(n, &map.derivative(&x)).powi(n as i32 - 1)
                    })
                    .sum::<f64>()
                    * radius.powi(n as i32 - 1);
                let rhs = surface.powf(e);
                let c = lhs / rhs;
                c_max = c_max.max(c);
                table.push(row![
                    n,
                    map,
                    num(center[0]),
                    num(radius),
                    num(absolute),
                    num(signed),
                    num(rhs),
                    num(c)
                ]);
            }
        }
        worst_excess = worst_excess.max(c_max / sharp);
        rep.value(format!("constant_{n}d"), c_max);
        rep.value(format!("sharp_{n}d"), sharp);
        rep.checks.push(
            Check::at_most(format!("below_sharp_{n}d"), c_max, ISOPERIMETRIC_SLACK * sharp, false).with_constant(c_max),
        );
    }
    rep.value("max_over_sharp", worst_excess);
    rep.tables.push(table);
    Ok(rep)
}

/// `𝒯_{r,x₀}ρ` on the nodes of `B(x₀, radius)` and a two-node margin, zero elsewhere.
fn potential_near(op: &Homotopy, frame: &Frame, radius: f64) -> Result<Vec<Vec<f64>>> {
    let grid = frame.grid();
    let nodes = nodes_within(grid, &op.center, radius + 2.0 * grid.spacing() * (1.0 + 1e-9));
    op.potential_map(frame, &nodes)
}

fn glued(cfg: &VerifyConfig, grid: &Grid, inner: ZooMap, radii: Radii, k: f64) -> Result<Glued> {
    glue_frames(
        &GlueSpec {
            radii,
            inner: FrameSource::Map(inner),
            outer: FrameSource::Map(ZooMap::new(ZooKind::Identity, cfg.n)),
            k,
        },
        grid,
    )
}

/// Frames probed by the inequality suites: closed ones and glued ones.
fn probe_frames(cfg: &VerifyConfig, grid: &Grid, radii: Radii) -> Result<Vec<(String, Frame)>> {
    let n = cfg.n;
    let mut out = Vec::new();
    for k in 1..=3 {
        let m = winding_map(n, k);
        out.push((format!("d_{m}"), m.exact_frame(grid)));
    }
    for inner in [winding_map(n, 2), ZooMap::new(ZooKind::RadialStretch { alpha: 2.0 }, n)] {
        let g = glued(cfg, grid, inner, radii, f64::INFINITY)?;
        out.push((format!("glue_{inner}"), g.frame));
    }
    Ok(out)
}

fn d_norm(frame: &Frame, p: f64, region: &Region) -> Result<f64> {
    let d = hs_norm(&frame.exterior_derivative()?);
    Ok(frame.grid().quadrature(region)?.lp(&d, p))
}

fn jacobian_bound(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("jacobian_bound");
    let n = cfg.n;
    let radii = cfg.radii();
    let grid = Grid::cube(n, cfg.res, cfg.half_width())?;
    let r = 0.5 * radii.big_r;
    let op = Homotopy::new(n, HomotopyConfig::default(), r, [0.0; 3])?;
    let mut table = Table::new("constants", &["frame", "lhs", "rho_n", "d_rho", "constant"]);
    let mut c_max: f64 = 0.0;
    for (name, frame) in probe_frames(cfg, &grid, radii)? {
        let pot = potential_near(&op, &frame, r)?;
        let t = Frame::differential(&grid, &pot)?;
        let jac: Vec<f64> = t.jacobian().into_iter().map(f64::abs).collect();
        let lhs = grid.quadrature(&Region::centered_ball(r))?.integrate(&jac);
        let a = frame.lp_norm(n as f64, &Region::annulus(r, 2.0 * r)?)?;
        let d = d_norm(&frame, 0.5 * n as f64, &Region::centered_ball(r))?;
        let c = lhs / (a + d).powi(n as i32);
        c_max = c_max.max(c);
        table.push(row![name, num(lhs), num(a), num(d), num(c)]);
    }
    rep.value("r", r);
    rep.value("constant", c_max);
    rep.checks
        .push(Check::new("constant_finite", c_max, f64::INFINITY, c_max.is_finite(), false).with_constant(c_max));
    rep.tables.push(table);
    Ok(rep)
}

fn degree_target_res(n: usize) -> usize {
    if n == 2 {
        PLANAR_RES
    } else {
        24
    }
}

fn negative_degree(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("negative_degree");
    let n = cfg.n;
    let radii = cfg.radii();
    let grid = Grid::cube(n, cfg.res, cfg.half_width())?;
    let op = Homotopy::new(n, HomotopyConfig::default(), radii.big_r, [0.0; 3])?;
    let domain = Domain::Annulus {
        inner: radii.r,
        outer: radii.big_r,
    };
    let mut table = Table::new("constants", &["frame", "negative_integral", "d_rho_n", "constant"]);
    let mut c_max: f64 = 0.0;
    let mut glued_frames = Vec::new();
    for inner in [winding_map(n, 2), ZooMap::new(ZooKind::RadialStretch { alpha: 2.0 }, n)] {
        let g = glued(cfg, &grid, inner, radii, f64::INFINITY)?;
        glued_frames.push((format!("glue_{inner}"), g.frame));
    }
    for (name, frame) in glued_frames {
        let pot = potential_near(&op, &frame, radii.big_r)?;
        let map = GridMap::new(&grid, &pot)?;
        let targets = target_grid(&map, domain, degree_target_res(n))?;
        let field = degree_sweep(&map, domain, &targets, DegreeOptions::for_dim(n))?;
        let lhs = negative_degree_integral(&field);
        let d = d_norm(&frame, 0.5 * n as f64, &Region::Whole)?.powi(n as i32);
        let c = lhs / d;
        c_max = c_max.max(c);
        table.push(row![name, num(lhs), num(d), num(c)]);
    }
    rep.value("constant", c_max);
    rep.checks
        .push(Check::new("constant_finite", c_max, f64::INFINITY, c_max.is_finite(), false).with_constant(c_max));
    rep.tables.push(table);
    Ok(rep)
}

fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(3)
    }
}

/// `dx + ε β(|x|/0.9) C dx` with a fixed skew `C`; equal to `dx` outside `B(0.9)`.
fn perturbed_identity(grid: &Grid, eps: f64) -> Frame {
    let n = grid.dim();
    Frame::from_matrix_fn(grid, |p| {
        let b = eps * bump(norm(p) / 0.9);
        let mut m = linalg::identity(n);
        m[0][1] += b;
        m[1][0] -= b;
        if n == 3 {
            m[1][2] += b;
            m[2][1] -= b;
        }
        m
    })
}

const PERTURBATIONS: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.8];

fn continuity(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("continuity");
    let n = cfg.n;
    let grid = Grid::cube(n, cfg.res, 2.6)?;
    let op = Homotopy::unit(n);
    let points: Vec<Point> = fibonacci_directions(n, 16)
        .into_iter()
        .map(|u| [2.3 * u[0], 2.3 * u[1], 2.3 * u[2]])
        .collect();
    let mut table = Table::new("constants", &["eps", "lhs", "d_rho_1", "constant"]);
    let mut c_max: f64 = 0.0;
    for eps in std::iter::once(0.0).chain(PERTURBATIONS) {
        let frame = perturbed_identity(&grid, eps);
        let comps: Vec<Vec<f64>> = frame
            .members()
            .iter()
            .flat_map(|m| m.components().iter().cloned())
            .collect();
        let interp = Interpolator::new(&grid, &comps);
        let values: Vec<Vec<f64>> = points.iter().map(|x| op.potential_at(&interp, x)).collect();
        let mut lhs: f64 = 0.0;
        for i in 0..points.len() {
            for j in 0..i {
                let s = (0..n)
                    .map(|a| (values[i][a] - values[j][a] - (points[i][a] - points[j][a])).powi(2))
                    .sum::<f64>()
                    .sqrt();
                lhs = lhs.max(s);
            }
        }
        let d = d_norm(&frame, 1.0, &Region::Whole)?;
        if eps == 0.0 {
            rep.checks.push(Check::at_most("closed_frame", lhs, 1e-9, true));
            table.push(row![num(eps), num(lhs), num(d), ""]);
            continue;
        }
        let c = lhs / d;
        c_max = c_max.max(c);
        table.push(row![num(eps), num(lhs), num(d), num(c)]);
    }
    rep.value("constant", c_max);
    rep.checks
        .push(Check::new("constant_finite", c_max, f64::INFINITY, c_max.is_finite(), false).with_constant(c_max));
    rep.tables.push(table);
    Ok(rep)
}

fn degree_bound(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("degree_bound");
    let n = cfg.n;
    let grid = Grid::cube(n, cfg.res, 2.6)?;
    let op = Homotopy::unit(n);
    let domain = Domain::ball(2.0);
    let mut table = Table::new("degrees", &["eps", "d_rho_1", "max_degree", "unresolved"]);
    let mut threshold: f64 = 0.0;
    let mut below = true;
    for (j, eps) in PERTURBATIONS.into_iter().enumerate() {
        let frame = perturbed_identity(&grid, eps);
        let pot = potential_near(&op, &frame, 2.0)?;
        let map = GridMap::new(&grid, &pot)?;
        let targets = target_grid(&map, domain, degree_target_res(n))?;
        let field = degree_sweep(&map, domain, &targets, DegreeOptions::for_dim(n))?;
        let max_deg = field.degree.iter().copied().max().unwrap_or(0);
        let d = d_norm(&frame, 1.0, &Region::Whole)?;
        below &= max_deg <= 1;
        if below {
            threshold = d;
        }
        table.push(row![num(eps), num(d), max_deg, field.unresolved]);
        if j == 0 {
            rep.checks
                .push(Check::at_most("smallest_perturbation", max_deg as f64, 1.0, true));
        }
    }
    rep.value("largest_tested_d_rho_1_with_degree_at_most_1", threshold);
    rep.tables.push(table);
    Ok(rep)
}

fn frame_bound(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("frame_bound");
    let n = cfg.n;
    let q = cfg.q;
    // Radii halved so that B(2R) fits the usual box.
    let full = cfg.radii();
    let radii = Radii::from_slice(&full.as_array().map(|v| 0.5 * v))?;
    let (r, big_r) = (radii.r, radii.big_r);
    let grid = Grid::cube(n, cfg.res, cfg.half_width())?;
    let mut frames = vec![(
        "scaled_identity".to_string(),
        Frame::constant(&grid, {
            let mut m = linalg::identity(n);
            for (a, row) in m.iter_mut().enumerate().take(n) {
                row[a] = 2.0;
            }
            m
        }),
    )];
    for inner in [winding_map(n, 2), ZooMap::new(ZooKind::RadialStretch { alpha: 2.0 }, n)] {
        let g = glued(cfg, &grid, inner, radii, f64::INFINITY)?;
        frames.push((format!("glue_{inner}"), g.frame));
    }
    let mut table = Table::new("constants", &["frame", "lhs", "rho_outer", "d_rho_q", "constant"]);
    let mut c_max: f64 = 0.0;
    for (name, frame) in frames {
        let lhs = frame.lp_norm(n as f64, &Region::annulus(r, big_r)?)?;
        let outer = frame.lp_norm(n as f64, &Region::annulus(big_r, 2.0 * big_r)?)?;
        let d = d_norm(&frame, q, &Region::centered_ball(2.0 * big_r))?;
        let c = lhs / (outer + d);
        c_max = c_max.max(c);
        table.push(row![name, num(lhs), num(outer), num(d), num(c)]);
    }
    rep.value("constant", c_max);
    rep.checks
        .push(Check::new("constant_finite", c_max, f64::INFINITY, c_max.is_finite(), false).with_constant(c_max));
    rep.tables.push(table);
    Ok(rep)
}

fn degree_value(w: Result<Winding>) -> f64 {
    match w {
        Ok(Winding::Degree(k)) => k as f64,
        _ => f64::NAN,
    }
}

/// `f + t·P` with a perturbation `|P| ≤ 0.15` on `B(1)`.
fn perturbed(map: ZooMap, t: f64) -> impl Fn(&Point) -> Point + Sync {
    move |x: &Point| {
        let f = map.eval(x);
        let p = [
            0.1 * (3.0 * x[1]).sin(),
            0.1 * (2.0 * x[0]).cos() * x[2],
            0.1 * x[0] * x[1],
        ];
        let mut out = [0.0; 3];
        for a in 0..map.n {
            out[a] = f[a] + t * p[a];
        }
        out
    }
}

fn degree_identities() -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("degree");
    let mut table = Table::new("degrees", &["test", "n", "k", "expected", "computed"]);
    let mut push = |rep: &mut SuiteReport, name: String, n: usize, k: u32, expected: f64, got: f64| {
        table.push(row![name, n, k, num(expected), num(got)]);
        rep.checks.push(Check::new(name, got, expected, got == expected, true));
    };
    for n in [2, 3] {
        for k in 1..=3 {
            let m = winding_map(n, k);
            let d = degree_value(degree_winding(&m, &[0.0; 3], Domain::ball(1.0)));
            push(&mut rep, format!("winding_{n}d_k{k}"), n, k, k as f64, d);
        }
        for k in [2, 3] {
            let m = winding_map(n, k);
            for t in [0.0, 1.0] {
                let f = FnMap { n, f: perturbed(m, t) };
                for (j, y) in [[0.1, 0.05, 0.08], [0.6, -0.35, 0.2]].iter().enumerate() {
                    let mut y = *y;
                    if n == 2 {
                        y[2] = 0.0;
                    }
                    let whole = degree_value(degree_winding(&f, &y, Domain::ball(1.0)));
                    let ball = degree_value(degree_winding(&f, &y, Domain::ball(0.5)));
                    let shell = degree_value(degree_winding(&f, &y, Domain::Annulus { inner: 0.5, outer: 1.0 }));
                    push(
                        &mut rep,
                        format!("additivity_{n}d_k{k}_t{t}_y{j}"),
                        n,
                        k,
                        whole,
                        ball + shell,
                    );
                }
            }
            for step in 0..=10 {
                let t = step as f64 / 10.0;
                let f = FnMap { n, f: perturbed(m, t) };
                let d = degree_value(degree_winding(&f, &[0.0; 3], Domain::ball(1.0)));
                push(&mut rep, format!("homotopy_{n}d_k{k}_t{step}"), n, k, k as f64, d);
            }
        }
    }
    rep.tables.push(table);
    Ok(rep)
}

/// Degree of `f` at each target node from the angle sum of a fine boundary
/// polygon, rounded; an oracle independent of the sweep.
fn polygon_degrees(f: &dyn SampledMap, radius: f64, vertices: usize, targets: &Grid) -> Vec<i64> {
    use rayon::prelude::*;
    let poly: Vec<Point> = (0..vertices)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / vertices as f64;
            f.eval(&[radius * a.cos(), radius * a.sin(), 0.0])
        })
        .collect();
    (0..targets.len())
        .into_par_iter()
        .map(|i| winding_of_polygon(&poly, &targets.point(i)).round() as i64)
        .collect()
}

fn excess() -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("excess");
    let f = ZooMap::new(ZooKind::Winding2d { k: 2 }, 2);
    let domain = Domain::ball(1.0);
    let targets = target_grid(&f, domain, EXCESS_RES)?;
    let field = degree_sweep(&f, domain, &targets, DegreeOptions::for_dim(2))?;
    let value = excess_degree_integral(&field);
    let oracle_deg = polygon_degrees(&f, 1.0, 4 * 2048, &targets);
    let quad = targets.quadrature(&Region::Whole)?;
    let oracle = quad.integrate_with(|i| (oracle_deg[i] - 1).max(0) as f64);
    let pi = std::f64::consts::PI;
    rep.value("excess", value);
    rep.value("oracle", oracle);
    rep.value("masked", field.masked as f64);
    rep.value("unresolved", field.unresolved as f64);
    rep.checks.push(Check::at_most(
        "excess_vs_pi",
        (value - pi).abs() / pi,
        EXCESS_TOLERANCE,
        true,
    ));
    rep.checks.push(Check::at_most(
        "oracle_agreement",
        (value - oracle).abs() / oracle,
        ORACLE_TOLERANCE,
        true,
    ));
    Ok(rep)
}

fn glue(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("glue");
    let radii = cfg.radii();
    let grid = Grid::cube(2, PLANAR_RES, cfg.half_width())?;
    let inner = ZooMap::new(ZooKind::Winding2d { k: 2 }, 2);
    let outer = ZooMap::new(ZooKind::Identity, 2);
    let g = glue_frames(
        &GlueSpec {
            radii,
            inner: FrameSource::Map(inner),
            outer: FrameSource::Map(outer),
            k: cfg.k,
        },
        &grid,
    )?;
    let mut inside: f64 = 0.0;
    let mut outside: f64 = 0.0;
    for i in 0..grid.len() {
        let x = grid.point(i);
        let s = norm(&x);
        let got = g.frame.matrix(i);
        let diff = |m: Mat| {
            (0..2)
                .flat_map(|a| (0..2).map(move |b| (a, b)))
                .map(|(a, b)| (got[a][b] - m[a][b]).abs())
                .fold(0.0, f64::max)
        };
        if s <= radii.r {
            inside = inside.max(diff(inner.derivative(&x)));
        } else if s >= radii.big_r {
            outside = outside.max(diff(outer.derivative(&x)));
        }
    }
    rep.checks
        .push(Check::new("matches_inner", inside, 0.0, inside == 0.0, true));
    rep.checks
        .push(Check::new("matches_outer", outside, 0.0, outside == 0.0, true));
    let e = energy(&g.frame, cfg.q, &radii.annulus())?;
    rep.checks
        .push(Check::new("energy_finite", e, f64::INFINITY, e.is_finite(), true));
    rep.checks.push(Check::new(
        "distortion_finite",
        g.k_tilde,
        f64::INFINITY,
        g.k_tilde.is_finite(),
        true,
    ));
    // 𝒯_r ρ = f₀ + c on B(r), so its degree about the image of the center is 2.
    let op = Homotopy::new(2, HomotopyConfig::default(), radii.r, [0.0; 3])?;
    let pot = potential_near(&op, &g.frame, 0.5 * radii.r)?;
    let map = GridMap::new(&grid, &pot)?;
    let y = map.eval(&[0.0; 3]);
    let d = degree_value(degree_winding(&map, &y, Domain::ball(0.5 * radii.r)));
    rep.checks.push(Check::new("inner_degree", d, 2.0, d == 2.0, true));
    rep.value("k_tilde", g.k_tilde);
    rep.value("inner_collar_k", g.inner_collar_k);
    rep.value("outer_collar_k", g.outer_collar_k);
    rep.value("energy", e);
    rep.value("zero_collar_nodes", g.zero_collar_nodes as f64);
    Ok(rep)
}

/// `‖g_fd − g‖ / ‖g‖` over the given coordinates, with central differences.
pub fn gradient_check(obj: &Objective, x: &[f64], mu: f64, coords: &[usize], step: f64) -> f64 {
    let mut g = vec![0.0; x.len()];
    obj.value_and_gradient(x, mu, &mut g);
    let mut xp = x.to_vec();
    let mut err = 0.0;
    let mut size = 0.0;
    for &c in coords {
        xp[c] = x[c] + step;
        let fp = obj.value(&xp, mu).objective;
        xp[c] = x[c] - step;
        let fm = obj.value(&xp, mu).objective;
        xp[c] = x[c];
        let fd = (fp - fm) / (2.0 * step);
        err += (fd - g[c]).powi(2);
        size += g[c] * g[c];
    }
    (err / size).sqrt()
}

fn minimizer_glue(cfg: &VerifyConfig, res: usize) -> Result<(Glued, Annulus)> {
    let radii = cfg.radii();
    let grid = Grid::cube(cfg.n, res, cfg.half_width())?;
    let g = glued(
        cfg,
        &grid,
        ZooMap::new(ZooKind::RadialStretch { alpha: 2.0 }, cfg.n),
        radii,
        cfg.k,
    )?;
    Ok((g, Annulus::new(radii.r, radii.big_r)?))
}

fn minimizer(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("minimizer");
    let n = cfg.n;
    let mut runs: Vec<(usize, MinimizeRun, Diagnostics)> = Vec::new();
    let mut summary = Table::new(
        "refinement",
        &[
            "res",
            "status",
            "iterations",
            "energy",
            "violation",
            "el_max",
            "rh_max",
            "hi_max_1",
            "hi_max_2",
            "hi_max_3",
        ],
    );
    for res in cfg.refinement_pair() {
        let (g, annulus) = minimizer_glue(cfg, res)?;
        let mut opts = MinimizeOptions::new(cfg.q, cfg.k, annulus);
        opts.max_iter = cfg.max_iter;
        info!("minimizing at {res}^{n}");
        let run = minimize(&g.frame, &opts)?;
        let diag = diagnose(&run.frame, cfg.q, annulus)?;
        let hi: Vec<String> = diag
            .higher_integrability
            .iter()
            .map(|e| num(e.table.max_ratio))
            .collect();
        summary.push(row![
            res,
            format!("{:?}", run.status).to_lowercase(),
            run.iterations(),
            num(run.energy),
            num(run.violation),
            num(diag.el_max),
            num(diag.reverse_holder.max_ratio),
            hi[0],
            hi[1],
            hi[2],
        ]);
        if res == cfg.res {
            gradient_checks(cfg, &mut rep, &g.frame, &opts)?;
        }
        runs.push((res, run, diag));
    }
    let (_, run, diag) = &runs[1];
    let (_, _, coarse) = &runs[0];
    rep.checks.push(Check::new(
        "converged",
        run.iterations() as f64,
        cfg.max_iter as f64,
        run.status == Status::Converged,
        true,
    ));
    rep.checks.push(Check::new(
        "monotone",
        run.monotonicity_breaks as f64,
        0.0,
        run.monotonicity_breaks == 0,
        true,
    ));
    rep.checks
        .push(Check::at_most("feasibility", run.violation, 1e-8 * run.energy, true));
    rep.checks
        .push(Check::at_most("el_residual", diag.el_max, EL_TOLERANCE, true));
    let worst_cacc = diag
        .caccioppoli
        .iter()
        .map(|c| c.bound.lhs / c.bound.rhs)
        .chain(diag.caccioppoli_bumps.iter().map(|b| b.lhs / b.rhs))
        .fold(0.0, f64::max);
    rep.checks
        .push(Check::new("caccioppoli", worst_cacc, 1.0, diag.caccioppoli_pass, true).with_constant(worst_cacc));
    let stable = |a: f64, b: f64| (a / b - 1.0).abs();
    let rh = diag.reverse_holder.max_ratio;
    rep.checks.push(
        Check::at_most(
            "reverse_holder_stable",
            stable(rh, coarse.reverse_holder.max_ratio),
            RATIO_STABILITY,
            false,
        )
        .with_constant(rh),
    );
    for (e, c) in diag.higher_integrability.iter().zip(&coarse.higher_integrability) {
        rep.checks.push(
            Check::at_most(
                format!("higher_integrability_stable_p{}", e.p),
                stable(e.table.max_ratio, c.table.max_ratio),
                RATIO_STABILITY,
                false,
            )
            .with_constant(e.table.max_ratio),
        );
    }
    rep.checks.push(Check::new(
        "ratios_finite",
        rh,
        f64::INFINITY,
        rh.is_finite() && diag.higher_integrability.iter().all(|e| e.table.max_ratio.is_finite()),
        true,
    ));
    constant_frame_ratios(cfg, &mut rep)?;
    rep.value("energy", run.energy);
    rep.value("initial_energy", run.initial_energy);
    rep.value("violation", run.violation);
    rep.value("iterations", run.iterations() as f64);
    rep.value("el_max", diag.el_max);
    rep.value("reverse_holder_max", rh);
    rep.tables.push(summary);
    rep.tables.push(diagnostic_table(diag));
    let mut history = Vec::new();
    run.write_history_csv(&mut history)?;
    let text = String::from_utf8(history).expect("ascii");
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let mut h = Table::new("history", &header);
    for l in lines {
        h.push(l.split(',').map(str::to_string).collect());
    }
    rep.tables.push(h);
    Ok(rep)
}

fn gradient_checks(cfg: &VerifyConfig, rep: &mut SuiteReport, initial: &Frame, opts: &MinimizeOptions) -> Result<()> {
    let x0 = flatten(initial);
    let obj = objective_for(initial, opts)?;
    let free = obj.free_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let coords: Vec<usize> = sample(&mut rng, free.len(), GRADIENT_COORDINATES.min(free.len()))
        .into_iter()
        .map(|i| free[i])
        .collect();
    let at_start = gradient_check(&obj, &x0, 1.0, &coords, 1e-4);
    // The glued frame has repeated top singular values, where |ρ| has a kink.
    // A small seeded perturbation gives a generic point, and K = 1 makes the
    // penalty active there.
    let mut x1 = x0.clone();
    for &i in &free {
        x1[i] += 1e-2 * rng.gen_range(-1.0..1.0);
    }
    let active = objective_for(initial, &MinimizeOptions { k: 1.0, ..*opts })?;
    let with_penalty = gradient_check(&active, &x1, 1.0, &coords, 1e-5);
    rep.value("gradient_error_start", at_start);
    rep.value("gradient_error_active", with_penalty);
    rep.checks.push(Check::at_most(
        "gradient",
        at_start.max(with_penalty),
        GRADIENT_TOLERANCE,
        true,
    ));
    Ok(())
}

fn diagnostic_table(d: &Diagnostics) -> Table {
    let mut t = Table::new("diagnostics", &["kind", "index", "lhs", "rhs", "value"]);
    for (i, e) in d.el.iter().enumerate() {
        t.push(row!["el", i, num(e.value), "", num(e.normalized)]);
    }
    for (i, c) in d.caccioppoli.iter().enumerate() {
        t.push(row![
            "caccioppoli_ball",
            i,
            num(c.bound.lhs),
            num(c.bound.rhs),
            c.bound.pass
        ]);
    }
    for (i, b) in d.caccioppoli_bumps.iter().enumerate() {
        t.push(row!["caccioppoli_bump", i, num(b.lhs), num(b.rhs), b.pass]);
    }
    for (i, r) in d.reverse_holder.rows.iter().enumerate() {
        t.push(row!["reverse_holder", i, num(r.lhs), num(r.rhs), num(r.ratio)]);
    }
    for e in &d.higher_integrability {
        for (i, r) in e.table.rows.iter().enumerate() {
            t.push(row![
                format!("higher_integrability_p{}", e.p),
                i,
                num(r.lhs),
                num(r.rhs),
                num(r.ratio)
            ]);
        }
    }
    t
}

/// Reverse Hölder and higher-integrability ratios of a constant frame are 1.
fn constant_frame_ratios(cfg: &VerifyConfig, rep: &mut SuiteReport) -> Result<()> {
    let n = cfg.n;
    let radii = cfg.radii();
    let annulus = Annulus::new(radii.r, radii.big_r)?;
    let grid = Grid::cube(n, cfg.refinement_pair()[0], cfg.half_width())?;
    let mut m = linalg::identity(n);
    m[0][1] = 0.5;
    m[n - 1][0] = -0.25;
    let profile = Profile::new(&Frame::constant(&grid, m))?;
    let mut worst: f64 = 0.0;
    for ball in Ball::panel(n, &annulus, crate::diagnostics::BALL_PANEL_SIZE) {
        worst = worst.max((profile.reverse_holder(cfg.q, annulus, ball)?.ratio - 1.0).abs());
        for p in probe_exponents(n) {
            worst = worst.max((profile.higher_integrability(p, annulus, ball)?.ratio - 1.0).abs());
        }
    }
    rep.checks
        .push(Check::at_most("constant_frame_ratios", worst, 1e-12, true));
    Ok(())
}

fn trend(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("trend");
    let n = cfg.n;
    let radii = cfg.radii();
    let annulus = Annulus::new(radii.r, radii.big_r)?;
    let mut table = Table::new(
        "pairs",
        &[
            "res",
            "k",
            "status",
            "iterations",
            "energy",
            "excess",
            "d_rho_n",
            "ratio",
            "k_tilde",
        ],
    );
    // The excess degree of f₀ on B(r/2) does not depend on the frame grid.
    let excess: Vec<f64> = (1..=4)
        .map(|k| {
            let f = winding_map(n, k);
            let domain = Domain::ball(0.5 * radii.r);
            let targets = target_grid(&f, domain, if n == 2 { PLANAR_RES } else { 32 })?;
            let field = degree_sweep(&f, domain, &targets, DegreeOptions::for_dim(n))?;
            Ok(excess_degree_integral(&field))
        })
        .collect::<Result<_>>()?;
    let mut constants = Vec::new();
    for res in cfg.refinement_pair() {
        let grid = Grid::cube(n, res, cfg.half_width())?;
        let mut ratios = Vec::new();
        for k in 1..=4u32 {
            let g = glued(cfg, &grid, winding_map(n, k), radii, cfg.k_trend)?;
            let mut opts = MinimizeOptions::new(cfg.q, cfg.k_trend, annulus);
            opts.max_iter = cfg.trend_iter;
            info!("trend k = {k} at {res}^{n}");
            let run = minimize(&g.frame, &opts)?;
            let d = d_norm(&run.frame, 0.5 * n as f64, &Region::Annulus(annulus))?.powi(n as i32);
            let e = excess[k as usize - 1];
            let ratio = e / d;
            table.push(row![
                res,
                k,
                format!("{:?}", run.status).to_lowercase(),
                run.iterations(),
                num(run.energy),
                num(e),
                num(d),
                num(ratio),
                num(g.k_tilde),
            ]);
            if e > 0.0 {
                ratios.push(ratio);
            }
        }
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        rep.checks
            .push(Check::at_most(format!("band_{res}"), hi / lo, TREND_BAND, false).with_constant(hi));
        rep.value(format!("constant_{res}"), hi);
        constants.push(hi);
    }
    let drift = (constants[1] / constants[0] - 1.0).abs();
    rep.checks
        .push(Check::at_most("constant_stable", drift, TREND_STABILITY, false).with_constant(constants[1]));
    rep.value("constant", constants[1]);
    rep.tables.push(table);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyConfig {
        VerifyConfig {
            res: 16,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(VerifyConfig::default().validate().is_ok());
        let bad = VerifyConfig {
            only: vec!["nonexistent".into()],
            ..VerifyConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Invalid { .. })));
        let coarse = VerifyConfig {
            res: 16,
            refine: 3,
            ..VerifyConfig::default()
        };
        assert!(coarse.validate().is_err());
        let selected = VerifyConfig {
            only: vec!["glue".into(), "cht".into()],
            ..VerifyConfig::default()
        };
        assert_eq!(selected.suites(), vec!["cht", "glue"]);
    }

    #[test]
    fn random_forms_are_seeded() {
        let a = random_cubic_coefficients(3, 2, 5);
        assert_eq!(a, random_cubic_coefficients(3, 2, 5));
        assert_ne!(a, random_cubic_coefficients(3, 2, 6));
        assert_eq!(a[0][0].len(), 20);
        assert_eq!(random_cubic_coefficients(2, 1, 0)[0][0].len(), 10);
    }

    #[test]
    fn gradient_check_is_small_at_generic_points() {
        let cfg = small();
        let (g, annulus) = minimizer_glue(&cfg, 16).unwrap();
        let opts = MinimizeOptions::new(2.0, 4.0, annulus);
        let mut rep = SuiteReport::new("t");
        gradient_checks(&cfg, &mut rep, &g.frame, &opts).unwrap();
        let c = rep.check("gradient").unwrap();
        assert!(c.pass, "{c:?}");
        assert!(rep.values["gradient_error_active"] > 0.0);
    }

    #[test]
    fn structural_suites_pass_on_small_grids() {
        let cfg = small();
        for name in ["exactness", "degree", "continuity"] {
            let rep = run_suite(name, &cfg).unwrap();
            for c in &rep.checks {
                assert!(!c.hard || c.pass, "{name}/{}: {c:?}", c.name);
            }
        }
    }

    #[test]
    fn tables_write_csv() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(row![1, num(0.5)]);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a,b\n1,5e-1\n");
    }
}
