//! Uniform Cartesian grids in two and three dimensions, plus the regions
//! (balls, annuli) that norms and integrals are restricted to.
//!
//! Points are stored as `[f64; 3]`; in two dimensions the third coordinate is
//! zero and ignored. Node values are laid out row-major with axis 0 slowest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Minimum node count per axis.
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    dims: [usize; 3],
    origin: Point,
    h: f64,
}

impl Grid {
    pub fn new(n: usize, dims: &[usize], origin: &[f64], h: f64) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::InvalidGrid(format!("dimension {n} not in {{2,3}}")));
        }
        if dims.len() != n || origin.len() != n {
            return Err(Error::InvalidGrid(format!(
                "expected {n} dims and origin coordinates, got {} and {}",
                dims.len(),
                origin.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d < MIN_NODES) {
            return Err(Error::InvalidGrid(format!("node count {d} below minimum {MIN_NODES}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing {h} must be positive")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        let mut d3 = [1; 3];
        let mut o3 = [0.0; 3];
        d3[..n].copy_from_slice(dims);
        o3[..n].copy_from_slice(origin);
        Ok(Grid {
            n,
            dims: d3,
            origin: o3,
            h,
        })
    }

    /// Symmetric grid with `res` nodes per axis spanning `[-half_width, half_width]^n`.
    pub fn cube(n: usize, res: usize, half_width: f64) -> Result<Self> {
        if res < 2 {
            return Err(Error::InvalidGrid(format!("resolution {res} too small")));
        }
        let h = 2.0 * half_width / (res - 1) as f64;
        Grid::new(n, &vec![res; n], &vec![-half_width; n], h)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.n]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.n]
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Linear-index stride of each axis.
    pub fn strides(&self) -> [usize; 3] {
        [self.dims[1] * self.dims[2], self.dims[2], 1]
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.dims[1] + ijk[1]) * self.dims[2] + ijk[2]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let c = self.coords(idx);
        let mut p = [0.0; 3];
        for a in 0..self.n {
            p[a] = self.origin[a] + c[a] as f64 * self.h;
        }
        p
    }

    /// Upper corner of the grid box.
    pub fn upper(&self) -> Point {
        let mut p = [0.0; 3];
        for a in 0..self.n {
            p[a] = self.origin[a] + (self.dims[a] - 1) as f64 * self.h;
        }
        p
    }

    pub fn contains(&self, p: &Point) -> bool {
        let up = self.upper();
        let eps = 1e-12 * self.h;
        (0..self.n).all(|a| p[a] >= self.origin[a] - eps && p[a] <= up[a] + eps)
    }

    /// True when the closed ball lies inside the grid box.
    pub fn covers_ball(&self, center: &Point, radius: f64) -> bool {
        let up = self.upper();
        let eps = 1e-12 * self.h;
        (0..self.n).all(|a| center[a] - radius >= self.origin[a] - eps && center[a] + radius <= up[a] + eps)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self == other
    }

    /// Grid with the same box and `factor` times finer node spacing
    /// (`(d - 1) * factor + 1` nodes per axis).
    pub fn refined(&self, factor: usize) -> Grid {
        let dims: Vec<usize> = self.dims().iter().map(|d| (d - 1) * factor + 1).collect();
        Grid::new(self.n, &dims, self.origin(), self.h / factor as f64).expect("refinement of a valid grid is valid")
    }

    pub fn quadrature(&self, region: &Region) -> Result<Quadrature> {
        Quadrature::new(self, region)
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

#[inline]
pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

/// `A(r, R)`: open annulus about the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
}

impl Annulus {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner && outer.is_finite()) {
            return Err(Error::invalid(
                "annulus",
                format!("radii must satisfy 0 < r < R, got ({inner}, {outer})"),
            ));
        }
        Ok(Annulus { inner, outer })
    }

    pub fn contains(&self, p: &Point) -> bool {
        let s = norm(p);
        s > self.inner && s < self.outer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Whole,
    Ball { center: Point, radius: f64 },
    Annulus(Annulus),
}

impl Region {
    pub fn ball(center: Point, radius: f64) -> Region {
        Region::Ball { center, radius }
    }

    pub fn centered_ball(radius: f64) -> Region {
        Region::Ball {
            center: [0.0; 3],
            radius,
        }
    }

    pub fn annulus(inner: f64, outer: f64) -> Result<Region> {
        Ok(Region::Annulus(Annulus::new(inner, outer)?))
    }

    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Region::Whole => true,
            Region::Ball { center, radius } => dist(p, center) < *radius,
            Region::Annulus(a) => a.contains(p),
        }
    }

    /// Classifies a cell of half-diagonal `reach` centered at `p`:
    /// `Some(true)` fully inside, `Some(false)` fully outside, `None` straddling.
    fn classify(&self, p: &Point, reach: f64) -> Option<bool> {
        match self {
            Region::Whole => Some(true),
            Region::Ball { center, radius } => {
                let d = dist(p, center);
                if d + reach < *radius {
                    Some(true)
                } else if d - reach > *radius {
                    Some(false)
                } else {
                    None
                }
            }
            Region::Annulus(a) => {
                let s = norm(p);
                if s - reach > a.inner && s + reach < a.outer {
                    Some(true)
                } else if s + reach < a.inner || s - reach > a.outer {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }

    /// Exact Lebesgue measure in dimension `n`.
    pub fn volume(&self, n: usize) -> Option<f64> {
        match self {
            Region::Whole => None,
            Region::Ball { radius, .. } => Some(ball_volume(n, *radius)),
            Region::Annulus(a) => Some(ball_volume(n, a.outer) - ball_volume(n, a.inner)),
        }
    }
}

pub fn ball_volume(n: usize, radius: f64) -> f64 {
    match n {
        2 => std::f64::consts::PI * radius * radius,
        3 => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        _ => unreachable!("dimension {n}"),
    }
}

pub fn sphere_area(n: usize, radius: f64) -> f64 {
    match n {
        2 => 2.0 * std::f64::consts::PI * radius,
        3 => 4.0 * std::f64::consts::PI * radius * radius,
        _ => unreachable!("dimension {n}"),
    }
}

/// Node-weighted midpoint rule restricted to a region.
///
/// A node's weight is the fraction of its cell inside the region, estimated
/// with 3^n subsamples for cells that straddle the region boundary. For the
/// whole grid the weights are the trapezoid fractions at the box faces.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
    pub cell_volume: f64,
}

impl Quadrature {
    pub fn new(grid: &Grid, region: &Region) -> Result<Self> {
        let n = grid.dim();
        let h = grid.spacing();
        let reach = 0.5 * h * (n as f64).sqrt();
        let offsets: Vec<Point> = subsample_offsets(n, h);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for idx in 0..grid.len() {
            let w = match region {
                Region::Whole => {
                    let c = grid.coords(idx);
                    (0..n)
                        .map(|a| {
                            if c[a] == 0 || c[a] == grid.dims[a] - 1 {
                                0.5
                            } else {
                                1.0
                            }
                        })
                        .product()
                }
                _ => {
                    let p = grid.point(idx);
                    match region.classify(&p, reach) {
                        Some(true) => 1.0,
                        Some(false) => 0.0,
                        None => {
                            let inside = offsets
                                .iter()
                                .filter(|o| region.contains(&[p[0] + o[0], p[1] + o[1], p[2] + o[2]]))
                                .count();
                            inside as f64 / offsets.len() as f64
                        }
                    }
                }
            };
            if w > 0.0 {
                nodes.push(idx);
                weights.push(w);
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyRegion(format!("{region:?}")));
        }
        Ok(Quadrature {
            nodes,
            weights,
            cell_volume: grid.cell_volume(),
        })
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.cell_volume
    }

    /// `∫ f` for a nodal scalar field.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&i, &w)| w * values[i])
            .sum::<f64>()
            * self.cell_volume
    }

    pub fn integrate_with(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&i, &w)| w * f(i))
            .sum::<f64>()
            * self.cell_volume
    }

    /// `(∫ |v|^p)^{1/p}` for nodal magnitudes `v`.
    pub fn lp(&self, magnitudes: &[f64], p: f64) -> f64 {
        self.integrate_with(|i| magnitudes[i].abs().powf(p)).powf(1.0 / p)
    }

    /// Volume-averaged norm `(⨍ |v|^p)^{1/p}`.
    pub fn average(&self, magnitudes: &[f64], p: f64) -> f64 {
        (self.integrate_with(|i| magnitudes[i].abs().powf(p)) / self.volume()).powf(1.0 / p)
    }

    pub fn max(&self, magnitudes: &[f64]) -> f64 {
        self.nodes
            .iter()
            .map(|&i| magnitudes[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn subsample_offsets(n: usize, h: f64) -> Vec<Point> {
    let s = [-h / 3.0, 0.0, h / 3.0];
    let mut out = Vec::new();
    for &a in &s {
        for &b in &s {
            if n == 2 {
                out.push([a, b, 0.0]);
            } else {
                for &c in &s {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}
