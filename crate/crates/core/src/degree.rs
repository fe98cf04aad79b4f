//! Local topological degree `deg(y, f, G)` of continuous maps on balls and
//! annuli, the solid-angle form `ω₀`, and the degree integrals.
//!
//! In two dimensions the degree is the winding number of `f(∂G) − y`, summed
//! from angle increments along a polygon. In three dimensions it is the flux
//! of `ω₀` (centered at `y`) through the image of a triangulated sphere,
//! divided by `4π`. Both count the image boundary as piecewise linear.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::{pullback_coefficients, Interpolator};
use crate::grid::{dist, norm, sphere_area, Grid, Point, Region};
use crate::linalg::Mat;
use crate::sphere::SphereMesh;

/// Largest distance of the winding sum from an integer that still counts.
pub const MAX_RESIDUAL: f64 = 0.1;
/// Largest fraction of unresolved sweep nodes.
pub const MAX_UNRESOLVED_FRACTION: f64 = 0.01;

/// A continuous map `ℝⁿ ⊃ G → ℝⁿ`, closed-form or grid-sampled.
pub trait SampledMap: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Point) -> Point;
    /// `Df(x)` with rows the output components, where available.
    fn jacobian(&self, _x: &Point) -> Option<Mat> {
        None
    }
}

/// A vector-valued 0-form on a grid, interpolated multilinearly.
pub struct GridMap {
    interp: Interpolator,
}

impl GridMap {
    pub fn new(grid: &Grid, components: &[Vec<f64>]) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch);
        }
        Ok(GridMap {
            interp: Interpolator::new(grid, components),
        })
    }
}

impl SampledMap for GridMap {
    fn dim(&self) -> usize {
        self.interp.grid().dim()
    }

    fn eval(&self, x: &Point) -> Point {
        let mut out = [0.0; 3];
        let n = self.dim();
        self.interp.eval_into(x, &mut out[..n]);
        out
    }
}

/// A map given by a closure.
pub struct FnMap<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&Point) -> Point + Sync> SampledMap for FnMap<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &Point) -> Point {
        (self.f)(x)
    }
}

/// `f` scaled by `c > 0`.
pub struct Scaled<'a> {
    pub map: &'a dyn SampledMap,
    pub factor: f64,
}

impl SampledMap for Scaled<'_> {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn eval(&self, x: &Point) -> Point {
        let p = self.map.eval(x);
        [self.factor * p[0], self.factor * p[1], self.factor * p[2]]
    }

    fn jacobian(&self, x: &Point) -> Option<Mat> {
        self.map
            .jacobian(x)
            .map(|m| crate::linalg::scale(self.dim(), &m, self.factor))
    }
}

/// The solid-angle form `ω₀ = Σ x_j/|x|ⁿ ⋆dx_j`.
#[derive(Debug, Clone, Copy)]
pub struct SolidAngleForm {
    pub n: usize,
}

impl SolidAngleForm {
    pub fn new(n: usize) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::invalid(
                "n",
                format!("solid-angle form needs n ∈ {{2,3}}, got {n}"),
            ));
        }
        Ok(SolidAngleForm { n })
    }

    /// Coefficients of the (n−1)-form at `x` in lexicographic order.
    pub fn coefficients(&self, x: &Point) -> Result<Vec<f64>> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::AtOrigin);
        }
        let s = r.powi(self.n as i32);
        Ok(match self.n {
            // ⋆dx₁ = dx₂, ⋆dx₂ = −dx₁
            2 => vec![-x[1] / s, x[0] / s],
            // ⋆dx₁ = dx₂∧dx₃, ⋆dx₂ = −dx₁∧dx₃, ⋆dx₃ = dx₁∧dx₂
            _ => vec![x[2] / s, -x[1] / s, x[0] / s],
        })
    }

    /// Coefficients of `f*ω₀` at `x`.
    pub fn pullback(&self, f: &dyn SampledMap, x: &Point) -> Result<Vec<f64>> {
        let jac = f
            .jacobian(x)
            .ok_or_else(|| Error::invalid("map", "no derivative available"))?;
        let w = self.coefficients(&f.eval(x))?;
        Ok(pullback_coefficients(self.n, self.n - 1, &w, &jac))
    }

    /// `∫_{S(0,1)} ω₀` computed on the standard boundary mesh.
    pub fn sphere_integral(&self) -> f64 {
        let mesh = SphereMesh::standard(self.n, 0);
        BoundaryImage::new(&mesh, &mesh.vertices, 1.0).flux(&[0.0; 3])
    }
}

/// A ball `B(center, radius)` or an annulus about the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Domain {
    Ball { center: Point, radius: f64 },
    Annulus { inner: f64, outer: f64 },
}

impl Domain {
    pub fn ball(radius: f64) -> Domain {
        Domain::Ball {
            center: [0.0; 3],
            radius,
        }
    }

    fn spheres(&self) -> Vec<(Point, f64, i64)> {
        match *self {
            Domain::Ball { center, radius } => vec![(center, radius, 1)],
            Domain::Annulus { inner, outer } => {
                vec![([0.0; 3], outer, 1), ([0.0; 3], inner, -1)]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Domain::Ball { radius, .. } if !(radius > 0.0) => {
                Err(Error::invalid("radius", format!("must be positive, got {radius}")))
            }
            Domain::Annulus { inner, outer } if !(inner > 0.0 && outer > inner) => Err(Error::invalid(
                "annulus",
                format!("need 0 < r < R, got ({inner}, {outer})"),
            )),
            _ => Ok(()),
        }
    }
}

/// Degree evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeOptions {
    /// Extra boundary-mesh doublings tried when a point is too close to the
    /// image boundary or the winding sum is not near an integer.
    pub max_refine: usize,
}

impl DegreeOptions {
    pub fn for_dim(n: usize) -> Self {
        DegreeOptions {
            max_refine: if n == 2 { 3 } else { 1 },
        }
    }
}

/// The image of a boundary mesh, with its mask scale.
#[derive(Debug, Clone)]
pub struct BoundaryImage {
    n: usize,
    pub points: Vec<Point>,
    cells: Vec<[usize; 3]>,
    /// `2 · (mesh diameter) · (Lipschitz estimate)`.
    pub mask_distance: f64,
    /// Aggregated face groups for icosphere meshes: `tiers[t][p]` covers
    /// faces `p·4^(t+1) .. (p+1)·4^(t+1)`.
    tiers: Vec<Vec<Patch>>,
}

/// A group of image faces summarized by its total area vector, area
/// centroid and a radius enclosing all of its vertices.
#[derive(Debug, Clone, Copy)]
struct Patch {
    area: Point,
    center: Point,
    radius: f64,
}

impl Patch {
    fn face(a: &Point, b: &Point, c: &Point) -> Patch {
        let n = cross(&sub(b, a), &sub(c, a));
        let center = [
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
            (a[2] + b[2] + c[2]) / 3.0,
        ];
        let radius = dist(a, &center).max(dist(b, &center)).max(dist(c, &center));
        Patch {
            area: [0.5 * n[0], 0.5 * n[1], 0.5 * n[2]],
            center,
            radius,
        }
    }

    fn merge(children: &[Patch]) -> Patch {
        let mut area = [0.0; 3];
        let mut center = [0.0; 3];
        let mut total = 0.0;
        for ch in children {
            let w = norm(&ch.area);
            total += w;
            for a in 0..3 {
                area[a] += ch.area[a];
                center[a] += w * ch.center[a];
            }
        }
        for c in &mut center {
            *c = if total > 0.0 { *c / total } else { 0.0 };
        }
        if total == 0.0 {
            for ch in children {
                for a in 0..3 {
                    center[a] += ch.center[a] / children.len() as f64;
                }
            }
        }
        let radius = children
            .iter()
            .map(|ch| dist(&ch.center, &center) + ch.radius)
            .fold(0.0, f64::max);
        Patch { area, center, radius }
    }
}

/// Distance, in patch radii, beyond which a face group counts as one term.
const FAR_PATCH: f64 = 16.0;

impl BoundaryImage {
    /// `images[i] = f(x_i)` for the mesh placed on a sphere of `radius`.
    pub fn new(mesh: &SphereMesh, images: &[Point], radius: f64) -> Self {
        let n = mesh.n;
        let mut lip: f64 = 0.0;
        let mut diam: f64 = 0.0;
        for c in &mesh.cells {
            let vs = &c[..n];
            for i in 0..n {
                let (a, b) = (vs[i], vs[(i + 1) % n]);
                let d = radius * dist(&mesh.vertices[a], &mesh.vertices[b]);
                diam = diam.max(d);
                if d > 0.0 {
                    lip = lip.max(dist(&images[a], &images[b]) / d);
                }
            }
        }
        let tiers = if n == 3 {
            build_tiers(&mesh.cells, images)
        } else {
            Vec::new()
        };
        BoundaryImage {
            n,
            points: images.to_vec(),
            cells: mesh.cells.clone(),
            mask_distance: 2.0 * diam * lip,
            tiers,
        }
    }

    /// True if some image vertex lies within `radius` of `y`.
    pub fn any_within(&self, y: &Point, radius: f64) -> bool {
        if self.tiers.is_empty() {
            return self.points.iter().any(|p| dist(p, y) <= radius);
        }
        let top = self.tiers.len() - 1;
        (0..self.tiers[top].len()).any(|p| self.patch_within(top + 1, p, y, radius))
    }

    fn patch_within(&self, tier: usize, p: usize, y: &Point, radius: f64) -> bool {
        if tier == 0 {
            return self.cells[p].iter().any(|&v| dist(&self.points[v], y) <= radius);
        }
        let patch = &self.tiers[tier - 1][p];
        if dist(&patch.center, y) - patch.radius > radius {
            return false;
        }
        (4 * p..4 * p + 4).any(|c| self.patch_within(tier - 1, c, y, radius))
    }

    fn patch_flux(&self, tier: usize, p: usize, y: &Point) -> f64 {
        if tier == 0 {
            let [a, b, c] = self.cells[p];
            return triangle_flux(&self.points[a], &self.points[b], &self.points[c], y, 0);
        }
        let patch = &self.tiers[tier - 1][p];
        let z = sub(&patch.center, y);
        let d = norm(&z);
        if d > FAR_PATCH * patch.radius {
            return dot(&patch.area, &z) / (d * d * d);
        }
        (4 * p..4 * p + 4).map(|c| self.patch_flux(tier - 1, c, y)).sum()
    }

    pub fn from_map(f: &dyn SampledMap, mesh: &SphereMesh, center: &Point, radius: f64) -> Self {
        let images: Vec<Point> = mesh.placed(center, radius).par_iter().map(|x| f.eval(x)).collect();
        BoundaryImage::new(mesh, &images, radius)
    }

    pub fn distance_to(&self, y: &Point) -> f64 {
        self.points.iter().map(|p| dist(p, y)).fold(f64::INFINITY, f64::min)
    }

    /// `∫_{f(∂G)} ω₀(· − y)`: total angle (n = 2) or solid angle (n = 3).
    pub fn flux(&self, y: &Point) -> f64 {
        match self.n {
            2 => self
                .cells
                .iter()
                .map(|&[a, b, _]| {
                    let p = sub(&self.points[a], y);
                    let q = sub(&self.points[b], y);
                    (p[0] * q[1] - p[1] * q[0]).atan2(p[0] * q[0] + p[1] * q[1])
                })
                .sum(),
            _ if !self.tiers.is_empty() => {
                let top = self.tiers.len();
                (0..self.tiers[top - 1].len()).map(|p| self.patch_flux(top, p, y)).sum()
            }
            _ => self
                .cells
                .iter()
                .map(|&[a, b, c]| triangle_flux(&self.points[a], &self.points[b], &self.points[c], y, 0))
                .sum(),
        }
    }

    /// Bounding boxes of the image cells.
    fn boxes(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.n;
        self.cells.iter().map(move |c| {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for &v in &c[..n] {
                for a in 0..n {
                    lo[a] = lo[a].min(self.points[v][a]);
                    hi[a] = hi[a].max(self.points[v][a]);
                }
            }
            (lo, hi)
        })
    }

    /// Bounding box of the whole image.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..self.n {
            lo[a] = self.points.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
            hi[a] = self.points.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
        }
        (lo, hi)
    }
}

/// Patch tiers for meshes whose faces come in runs of four siblings, down to
/// the twenty icosahedron faces.
fn build_tiers(cells: &[[usize; 3]], points: &[Point]) -> Vec<Vec<Patch>> {
    let mut count = cells.len();
    if count < 20
        || !count.is_multiple_of(20)
        || !(count / 20).is_power_of_two()
        || !(count / 20).trailing_zeros().is_multiple_of(2)
    {
        return Vec::new();
    }
    let mut tiers = Vec::new();
    let mut current: Vec<Patch> = cells
        .iter()
        .map(|&[a, b, c]| Patch::face(&points[a], &points[b], &points[c]))
        .collect();
    while count > 20 {
        current = current.chunks(4).map(Patch::merge).collect();
        count /= 4;
        tiers.push(current.clone());
    }
    tiers
}

#[inline]
fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Seven-point degree-5 rule on the reference triangle: barycentric
/// coordinates and weights summing to one.
const TRIANGLE_RULE: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

const MAX_SUBDIVISION: usize = 6;
/// Distance, in face diameters, beyond which one centroid point suffices.
const FAR_FIELD: f64 = 16.0;

/// Pull-back of `ω₀(· − y)` to the flat triangle `(a, b, c)`, integrated over
/// the reference triangle. The integrand is `det(a − y, b − a, c − a)/|z|³`.
fn triangle_flux(a: &Point, b: &Point, c: &Point, y: &Point, depth: usize) -> f64 {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let a_rel = sub(a, y);
    let det = dot(&a_rel, &cross(&e1, &e2));
    if det == 0.0 {
        return 0.0;
    }
    let centroid = [
        (a_rel[0] + b[0] - y[0] + c[0] - y[0]) / 3.0,
        (a_rel[1] + b[1] - y[1] + c[1] - y[1]) / 3.0,
        (a_rel[2] + b[2] - y[2] + c[2] - y[2]) / 3.0,
    ];
    let size = norm(&e1).max(norm(&e2)).max(dist(b, c));
    let r_c = norm(&centroid);
    if r_c > FAR_FIELD * size {
        // The integrand varies by O((size/r)²) over the face.
        return 0.5 * det / (r_c * r_c * r_c);
    }
    if depth < MAX_SUBDIVISION && r_c < 2.0 * size {
        let ab = mid(a, b);
        let bc = mid(b, c);
        let ca = mid(c, a);
        return triangle_flux(a, &ab, &ca, y, depth + 1)
            + triangle_flux(&ab, b, &bc, y, depth + 1)
            + triangle_flux(&ca, &bc, c, y, depth + 1)
            + triangle_flux(&ab, &bc, &ca, y, depth + 1);
    }
    let mut s = 0.0;
    for (l, w) in TRIANGLE_RULE {
        let z = [
            l[0] * (a[0] - y[0]) + l[1] * (b[0] - y[0]) + l[2] * (c[0] - y[0]),
            l[0] * (a[1] - y[1]) + l[1] * (b[1] - y[1]) + l[2] * (c[1] - y[1]),
            l[0] * (a[2] - y[2]) + l[1] * (b[2] - y[2]) + l[2] * (c[2] - y[2]),
        ];
        let r2 = dot(&z, &z);
        s += w / (r2 * r2.sqrt());
    }
    // Reference triangle area is ½.
    0.5 * det * s
}

#[inline]
fn mid(a: &Point, b: &Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

/// Outcome of one degree evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Winding {
    Degree(i64),
    /// `y` lies within the mask distance of the boundary image at every
    /// refinement tried.
    Masked,
}

/// Images of the boundary sphere(s) of a domain at increasing refinement,
/// built lazily.
pub struct DegreeEvaluator<'a> {
    f: &'a dyn SampledMap,
    domain: Domain,
    options: DegreeOptions,
    levels: Vec<Vec<(BoundaryImage, i64)>>,
}

impl<'a> DegreeEvaluator<'a> {
    pub fn new(f: &'a dyn SampledMap, domain: Domain, options: DegreeOptions) -> Result<Self> {
        domain.validate()?;
        let mut e = DegreeEvaluator {
            f,
            domain,
            options,
            levels: Vec::new(),
        };
        e.ensure_level(0);
        Ok(e)
    }

    fn ensure_level(&mut self, level: usize) {
        while self.levels.len() <= level {
            let l = self.levels.len();
            let mesh = SphereMesh::standard(self.f.dim(), l);
            let images = self
                .domain
                .spheres()
                .into_iter()
                .map(|(c, r, sign)| (BoundaryImage::from_map(self.f, &mesh, &c, r), sign))
                .collect();
            self.levels.push(images);
        }
    }

    pub fn base_images(&self) -> &[(BoundaryImage, i64)] {
        &self.levels[0]
    }

    /// Winding number at one refinement level; `None` when masked.
    fn at_level(&self, level: usize, y: &Point) -> Result<Option<(i64, f64)>> {
        let n = self.f.dim();
        let mut total = 0i64;
        let mut residual: f64 = 0.0;
        for (img, sign) in &self.levels[level] {
            if img.any_within(y, img.mask_distance) {
                return Ok(None);
            }
            let w = img.flux(y) / sphere_area(n, 1.0);
            let k = w.round();
            residual = residual.max((w - k).abs());
            total += sign * k as i64;
        }
        Ok(Some((total, residual)))
    }

    /// `deg(y, f, G)` from the already built levels, finest last.
    fn resolve(&self, y: &Point) -> Result<Winding> {
        let mut worst = 0.0;
        for level in 0..self.levels.len() {
            match self.at_level(level, y)? {
                None => continue,
                Some((k, res)) if res <= MAX_RESIDUAL => return Ok(Winding::Degree(k)),
                Some((_, res)) => worst = res,
            }
        }
        if worst > 0.0 {
            return Err(Error::UnresolvedDegree(format!(
                "winding residual {worst:.3} at y = {:?}",
                &y[..self.f.dim()]
            )));
        }
        Ok(Winding::Masked)
    }

    /// `deg(y, f, G)`, refining the boundary mesh when needed.
    pub fn degree(&mut self, y: &Point) -> Result<Winding> {
        loop {
            let r = self.resolve(y);
            let done = matches!(r, Ok(Winding::Degree(_)));
            if done || self.levels.len() > self.options.max_refine {
                return r;
            }
            let next = self.levels.len();
            self.ensure_level(next);
        }
    }
}

/// `deg(y, f, G)` for a single point.
pub fn degree_winding(f: &dyn SampledMap, y: &Point, domain: Domain) -> Result<Winding> {
    DegreeEvaluator::new(f, domain, DegreeOptions::for_dim(f.dim()))?.degree(y)
}

/// Degree values over a grid of target points.
#[derive(Debug, Clone)]
pub struct DegreeField {
    pub grid: Grid,
    pub degree: Vec<i64>,
    /// True where the value came from flood fill rather than evaluation.
    pub mask: Vec<bool>,
    pub masked: usize,
    pub unresolved: usize,
    pub evaluations: usize,
}

impl DegreeField {
    /// `∫ g(deg(y)) dy` with the whole-grid weights.
    pub fn integrate(&self, g: impl Fn(i64) -> f64) -> f64 {
        let q = self.grid.quadrature(&Region::Whole).expect("nonempty grid");
        q.integrate_with(|i| g(self.degree[i]))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.grid.dim();
        let header: Vec<String> = (1..=n).map(|a| format!("y{a}")).collect();
        writeln!(w, "{},deg,mask", header.join(","))?;
        for i in 0..self.grid.len() {
            let p = self.grid.point(i);
            for v in &p[..n] {
                write!(w, "{v},")?;
            }
            writeln!(w, "{},{}", self.degree[i], u8::from(self.mask[i]))?;
        }
        Ok(())
    }
}

/// Target grid covering the boundary image with `res` nodes per axis.
pub fn target_grid(f: &dyn SampledMap, domain: Domain, res: usize) -> Result<Grid> {
    let e = DegreeEvaluator::new(f, domain, DegreeOptions { max_refine: 0 })?;
    let n = f.dim();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (img, _) in e.base_images() {
        let (l, h) = img.bounds();
        for a in 0..n {
            lo[a] = lo[a].min(l[a]);
            hi[a] = hi[a].max(h[a]);
        }
    }
    let width = (0..n).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let pad = 0.02 * width + 1e-9;
    let h = (width + 2.0 * pad) / (res - 1) as f64;
    let mut origin = vec![0.0; n];
    for a in 0..n {
        let c = 0.5 * (lo[a] + hi[a]);
        origin[a] = c - 0.5 * (res - 1) as f64 * h;
    }
    Grid::new(n, &vec![res; n], &origin, h)
}

/// Degree of `f` on `domain` at every node of `targets`.
///
/// Nodes farther than one target spacing (per axis) from every image cell's
/// bounding box form components on which the degree is constant; one
/// representative per component is evaluated. The remaining nodes are
/// evaluated individually, and masked ones are filled from the nearest
/// resolved node.
pub fn degree_sweep(f: &dyn SampledMap, domain: Domain, targets: &Grid, options: DegreeOptions) -> Result<DegreeField> {
    let n = f.dim();
    if targets.dim() != n {
        return Err(Error::invalid("targets", "dimension mismatch"));
    }
    let mut eval = DegreeEvaluator::new(f, domain, options)?;
    let len = targets.len();
    let hy = targets.spacing();
    let mut near = vec![false; len];
    for (img, _) in eval.base_images() {
        for (lo, hi) in img.boxes() {
            mark_box(targets, &lo, &hi, hy, &mut near);
        }
    }
    // Connected components of the far nodes.
    let mut comp = vec![usize::MAX; len];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..len {
        if near[start] || comp[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut k = 0;
        while k < members.len() {
            let i = members[k];
            k += 1;
            for j in neighbors(targets, i) {
                if !near[j] && comp[j] == usize::MAX {
                    comp[j] = id;
                    members.push(j);
                }
            }
        }
        components.push(members);
    }
    // Work items: a few spread-out candidates per component, or a single
    // near node. An item resolves at its first candidate with a degree.
    let mut items: Vec<(Vec<usize>, Vec<usize>)> = components
        .iter()
        .map(|members| {
            let tries = members.len().min(32);
            let cands = (0..tries).map(|t| members[t * members.len() / tries]).collect();
            (cands, members.clone())
        })
        .collect();
    items.extend((0..len).filter(|&i| near[i]).map(|i| (vec![i], vec![i])));
    let mut value: Vec<Option<i64>> = vec![None; len];
    let mut pending: Vec<usize> = (0..items.len()).collect();
    let mut unresolved_items: Vec<usize> = Vec::new();
    let mut evaluations = 0usize;
    loop {
        let ev = &eval;
        let results: Vec<(usize, Result<Winding>, usize)> = pending
            .par_iter()
            .map(|&it| {
                let mut last = Ok(Winding::Masked);
                let mut count = 0;
                for &c in &items[it].0 {
                    count += 1;
                    last = ev.resolve(&targets.point(c));
                    if matches!(last, Ok(Winding::Degree(_))) {
                        break;
                    }
                }
                (it, last, count)
            })
            .collect();
        let mut retry = Vec::new();
        unresolved_items.clear();
        for (it, r, count) in results {
            evaluations += count;
            match r {
                Ok(Winding::Degree(k)) => {
                    for &i in &items[it].1 {
                        value[i] = Some(k);
                    }
                }
                Ok(Winding::Masked) => retry.push(it),
                Err(Error::UnresolvedDegree(_)) => {
                    retry.push(it);
                    unresolved_items.push(it);
                }
                Err(e) => return Err(e),
            }
        }
        if retry.is_empty() || eval.levels.len() > options.max_refine {
            break;
        }
        let next = eval.levels.len();
        eval.ensure_level(next);
        pending = retry;
    }
    let unresolved: usize = unresolved_items.iter().map(|&it| items[it].1.len()).sum();
    if (unresolved as f64) > MAX_UNRESOLVED_FRACTION * len as f64 {
        return Err(Error::UnresolvedDegree(format!(
            "{unresolved} of {len} target nodes unresolved"
        )));
    }
    let mask: Vec<bool> = value.iter().map(Option::is_none).collect();
    let masked = mask.iter().filter(|&&m| m).count();
    let degree = flood_fill(targets, value)?;
    Ok(DegreeField {
        grid: targets.clone(),
        degree,
        mask,
        masked,
        unresolved,
        evaluations,
    })
}

fn mark_box(grid: &Grid, lo: &Point, hi: &Point, pad: f64, near: &mut [bool]) {
    let n = grid.dim();
    let h = grid.spacing();
    let mut range = [(0usize, 0usize); 3];
    for a in 0..n {
        let o = grid.origin()[a];
        let top = grid.dims()[a] as isize - 1;
        let l = (((lo[a] - pad - o) / h).floor() as isize).clamp(0, top);
        let u = (((hi[a] + pad - o) / h).ceil() as isize).clamp(-1, top);
        if u < l || (hi[a] + pad - o) / h < 0.0 || (lo[a] - pad - o) / h > top as f64 {
            return;
        }
        range[a] = (l as usize, u as usize);
    }
    if n == 2 {
        range[2] = (0, 0);
    }
    for i in range[0].0..=range[0].1 {
        for j in range[1].0..=range[1].1 {
            for k in range[2].0..=range[2].1 {
                near[grid.index([i, j, k])] = true;
            }
        }
    }
}

fn neighbors(grid: &Grid, idx: usize) -> impl Iterator<Item = usize> + '_ {
    let c = grid.coords(idx);
    let n = grid.dim();
    let strides = grid.strides();
    (0..n).flat_map(move |a| {
        let mut v = Vec::with_capacity(2);
        if c[a] > 0 {
            v.push(idx - strides[a]);
        }
        if c[a] + 1 < grid.dims()[a] {
            v.push(idx + strides[a]);
        }
        v
    })
}

/// Multi-source breadth-first fill of missing values from resolved nodes.
fn flood_fill(grid: &Grid, mut value: Vec<Option<i64>>) -> Result<Vec<i64>> {
    let mut queue: VecDeque<usize> = (0..value.len()).filter(|&i| value[i].is_some()).collect();
    if queue.is_empty() {
        return Err(Error::UnresolvedDegree("no target node could be resolved".into()));
    }
    while let Some(i) = queue.pop_front() {
        let v = value[i];
        for j in neighbors(grid, i) {
            if value[j].is_none() {
                value[j] = v;
                queue.push_back(j);
            }
        }
    }
    Ok(value.into_iter().map(|v| v.expect("grid is connected")).collect())
}

/// `∫ max{deg(y, f, B) − 1, 0} dy`.
pub fn excess_degree_integral(field: &DegreeField) -> f64 {
    field.integrate(|d| (d - 1).max(0) as f64)
}

/// `−∫_{deg < 0} deg(y, f, A) dy`.
pub fn negative_degree_integral(field: &DegreeField) -> f64 {
    field.integrate(|d| (-d).max(0) as f64)
}

/// Left side of the change-of-variables identity, `∫_G η(f(x)) J_f(x) dx`,
/// by quadrature over `region` of `grid`.
pub fn degree_cov(
    f: &dyn SampledMap,
    eta: &(dyn Fn(&Point) -> f64 + Sync),
    grid: &Grid,
    region: &Region,
) -> Result<f64> {
    let n = f.dim();
    let q = grid.quadrature(region)?;
    let vals: Vec<f64> = q
        .nodes
        .par_iter()
        .map(|&i| {
            let x = grid.point(i);
            let jac = f
                .jacobian(&x)
                .ok_or_else(|| Error::invalid("map", "no derivative available"))?;
            Ok(eta(&f.eval(&x)) * crate::linalg::det(n, &jac))
        })
        .collect::<Result<_>>()?;
    Ok(q.weights.iter().zip(vals).map(|(w, v)| w * v).sum::<f64>() * q.cell_volume)
}

/// `∫ η(y) deg(y) dy` over a degree field.
pub fn degree_weighted_integral(field: &DegreeField, eta: &dyn Fn(&Point) -> f64) -> f64 {
    let q = field.grid.quadrature(&Region::Whole).expect("nonempty grid");
    q.integrate_with(|i| eta(&field.grid.point(i)) * field.degree[i] as f64)
}

/// Exact degree of the unit circle map `z ↦ z^k` about the origin, via the
/// polygon angle sum (a convenience for diagnostics).
pub fn winding_of_polygon(points: &[Point], y: &Point) -> f64 {
    let m = points.len();
    (0..m)
        .map(|i| {
            let p = sub(&points[i], y);
            let q = sub(&points[(i + 1) % m], y);
            (p[0] * q[1] - p[1] * q[0]).atan2(p[0] * q[0] + p[1] * q[1])
        })
        .sum::<f64>()
        / (2.0 * PI)
}
