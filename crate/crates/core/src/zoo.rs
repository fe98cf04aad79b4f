//! Closed-form maps used as test data and as inner/outer frames for gluing.
//!
//! Maps are addressed by strings such as `identity`, `scaling:c=2`,
//! `winding2d:k=3`, `winding3d:k=2`, `radial_stretch:alpha=1.5`, `fold:a=0.5`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::degree::SampledMap;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::grid::{norm, Grid, Point};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ZooKind {
    Identity,
    Scaling {
        c: f64,
    },
    /// `z ↦ z^k` in the plane.
    Winding2d {
        k: u32,
    },
    /// `(s, θ, z) ↦ (s, kθ, z)` in cylindrical coordinates.
    Winding3d {
        k: u32,
    },
    /// `x ↦ |x|^{α−1} x`.
    RadialStretch {
        alpha: f64,
    },
    /// Radial profile `s` up to `a`, then decreasing linearly to `a/2` at `s = 1`.
    Fold {
        a: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZooMap {
    pub kind: ZooKind,
    pub n: usize,
}

impl fmt::Display for ZooMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ZooKind::Identity => write!(f, "identity"),
            ZooKind::Scaling { c } => write!(f, "scaling:c={c}"),
            ZooKind::Winding2d { k } => write!(f, "winding2d:k={k}"),
            ZooKind::Winding3d { k } => write!(f, "winding3d:k={k}"),
            ZooKind::RadialStretch { alpha } => write!(f, "radial_stretch:alpha={alpha}"),
            ZooKind::Fold { a } => write!(f, "fold:a={a}"),
        }
    }
}

impl ZooMap {
    /// Parses `name[:key=value]` for dimension `n`.
    pub fn parse(spec: &str, n: usize) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::invalid("n", format!("dimension {n} not in {{2,3}}")));
        }
        let (name, params) = match spec.split_once(':') {
            Some((a, b)) => (a.trim(), Some(b.trim())),
            None => (spec.trim(), None),
        };
        let param = |key: &str, default: f64| -> Result<f64> {
            let Some(p) = params else { return Ok(default) };
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::invalid("map", format!("expected key=value in `{spec}`")))?;
            if k.trim() != key {
                return Err(Error::invalid(
                    "map",
                    format!("`{name}` takes parameter `{key}`, got `{}`", k.trim()),
                ));
            }
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid("map", format!("bad value `{v}` in `{spec}`")))
        };
        let int = |v: f64| -> Result<u32> {
            if v >= 1.0 && v.fract() == 0.0 && v <= 64.0 {
                Ok(v as u32)
            } else {
                Err(Error::invalid(
                    "map",
                    format!("winding index must be a positive integer, got {v}"),
                ))
            }
        };
        let kind = match name {
            "identity" => {
                if params.is_some() {
                    return Err(Error::invalid("map", "identity takes no parameters"));
                }
                ZooKind::Identity
            }
            "scaling" => {
                let c = param("c", 2.0)?;
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::invalid("map", format!("scaling needs c > 0, got {c}")));
                }
                ZooKind::Scaling { c }
            }
            "winding2d" => {
                if n != 2 {
                    return Err(Error::invalid("map", "winding2d needs n = 2"));
                }
                ZooKind::Winding2d {
                    k: int(param("k", 2.0)?)?,
                }
            }
            "winding3d" => {
                if n != 3 {
                    return Err(Error::invalid("map", "winding3d needs n = 3"));
                }
                ZooKind::Winding3d {
                    k: int(param("k", 2.0)?)?,
                }
            }
            "radial_stretch" => {
                let alpha = param("alpha", 2.0)?;
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::invalid(
                        "map",
                        format!("radial_stretch needs alpha > 0, got {alpha}"),
                    ));
                }
                ZooKind::RadialStretch { alpha }
            }
            "fold" => {
                let a = param("a", 0.5)?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::invalid("map", format!("fold needs 0 < a < 1, got {a}")));
                }
                ZooKind::Fold { a }
            }
            other => return Err(Error::UnknownMap(other.to_string())),
        };
        Ok(ZooMap { kind, n })
    }

    pub fn new(kind: ZooKind, n: usize) -> Self {
        ZooMap { kind, n }
    }

    /// Pointwise distortion `|Df|ⁿ / J_f` off the singular sets.
    pub fn distortion(&self) -> f64 {
        let n = self.n as i32;
        match self.kind {
            ZooKind::Identity | ZooKind::Scaling { .. } | ZooKind::Winding2d { .. } => 1.0,
            ZooKind::Winding3d { k } => (k as f64).powi(2),
            ZooKind::RadialStretch { alpha } => alpha.max(1.0).powi(n) / alpha,
            ZooKind::Fold { .. } => f64::INFINITY,
        }
    }

    /// `df` as the discrete gradient of `f` sampled on `grid`.
    pub fn sampled_frame(&self, grid: &Grid) -> Result<Frame> {
        let comps: Vec<Vec<f64>> = (0..self.n)
            .map(|a| grid.points().map(|p| self.eval(&p)[a]).collect())
            .collect();
        Frame::differential(grid, &comps)
    }

    /// `df` sampled from the closed-form derivative.
    pub fn exact_frame(&self, grid: &Grid) -> Frame {
        Frame::from_matrix_fn(grid, |p| self.derivative(p))
    }

    /// Closed-form `Df(x)`; at singular points the limit along the first axis.
    pub fn derivative(&self, x: &Point) -> Mat {
        let n = self.n;
        match self.kind {
            ZooKind::Identity => linalg::identity(n),
            ZooKind::Scaling { c } => linalg::scale(n, &linalg::identity(n), c),
            ZooKind::Winding2d { k } => {
                // f' = k z^{k−1} acts as the matrix [[a, −b], [b, a]].
                let (a, b) = complex_pow(x[0], x[1], k - 1);
                let (a, b) = (k as f64 * a, k as f64 * b);
                [[a, -b, 0.0], [b, a, 0.0], [0.0; 3]]
            }
            ZooKind::Winding3d { k } => {
                let s = x[0].hypot(x[1]);
                let kf = k as f64;
                if s == 0.0 {
                    return [[1.0, 0.0, 0.0], [0.0, kf, 0.0], [0.0, 0.0, 1.0]];
                }
                let (c, sn) = (x[0] / s, x[1] / s);
                let th = x[1].atan2(x[0]);
                let (ck, sk) = ((kf * th).cos(), (kf * th).sin());
                // Df = [e_s' e_θ'] · diag(1, k) · R(−θ)
                let cols = [[ck, sk], [-sk, ck]];
                let mid = [[c, sn], [-kf * sn, kf * c]];
                let mut m = linalg::ZERO;
                for i in 0..2 {
                    for j in 0..2 {
                        m[i][j] = cols[0][i] * mid[0][j] + cols[1][i] * mid[1][j];
                    }
                }
                m[2][2] = 1.0;
                m
            }
            ZooKind::RadialStretch { alpha } => {
                let s = norm(x);
                if s == 0.0 {
                    return if alpha == 1.0 {
                        linalg::identity(n)
                    } else if alpha > 1.0 {
                        linalg::ZERO
                    } else {
                        linalg::scale(n, &linalg::identity(n), f64::INFINITY)
                    };
                }
                radial_derivative(n, x, s.powf(alpha - 1.0), alpha * s.powf(alpha - 1.0))
            }
            ZooKind::Fold { a } => {
                let s = norm(x);
                if s == 0.0 {
                    return linalg::identity(n);
                }
                let (g, dg) = fold_profile(a, s);
                radial_derivative(n, x, g / s, dg)
            }
        }
    }
}

/// `g(s)/s · (I − x̂x̂ᵀ) + g'(s) · x̂x̂ᵀ` for a radial map `x ↦ g(|x|) x̂`.
fn radial_derivative(n: usize, x: &Point, tangential: f64, radial: f64) -> Mat {
    let s = norm(x);
    let u = [x[0] / s, x[1] / s, x[2] / s];
    let mut m = linalg::ZERO;
    for i in 0..n {
        for j in 0..n {
            let p = u[i] * u[j];
            m[i][j] = radial * p + tangential * (if i == j { 1.0 } else { 0.0 } - p);
        }
    }
    m
}

fn fold_profile(a: f64, s: f64) -> (f64, f64) {
    if s <= a {
        (s, 1.0)
    } else {
        let slope = -(a - 0.5 * a) / (1.0 - a);
        (a + slope * (s - a), slope)
    }
}

fn complex_pow(x: f64, y: f64, k: u32) -> (f64, f64) {
    let (mut a, mut b) = (1.0, 0.0);
    for _ in 0..k {
        (a, b) = (a * x - b * y, a * y + b * x);
    }
    (a, b)
}

impl SampledMap for ZooMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &Point) -> Point {
        match self.kind {
            ZooKind::Identity => *x,
            ZooKind::Scaling { c } => [c * x[0], c * x[1], c * x[2]],
            ZooKind::Winding2d { k } => {
                let (a, b) = complex_pow(x[0], x[1], k);
                [a, b, 0.0]
            }
            ZooKind::Winding3d { k } => {
                let s = x[0].hypot(x[1]);
                let th = k as f64 * x[1].atan2(x[0]);
                [s * th.cos(), s * th.sin(), x[2]]
            }
            ZooKind::RadialStretch { alpha } => {
                let s = norm(x);
                if s == 0.0 {
                    return [0.0; 3];
                }
                let f = s.powf(alpha - 1.0);
                [f * x[0], f * x[1], f * x[2]]
            }
            ZooKind::Fold { a } => {
                let s = norm(x);
                if s == 0.0 {
                    return [0.0; 3];
                }
                let (g, _) = fold_profile(a, s);
                [g * x[0] / s, g * x[1] / s, g * x[2] / s]
            }
        }
    }

    fn jacobian(&self, x: &Point) -> Option<Mat> {
        Some(self.derivative(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(f: &ZooMap, x: &Point) -> Mat {
        let h = 1e-6;
        let mut m = linalg::ZERO;
        for j in 0..f.n {
            let mut p = *x;
            let mut q = *x;
            p[j] += h;
            q[j] -= h;
            let (fp, fq) = (f.eval(&p), f.eval(&q));
            for i in 0..f.n {
                m[i][j] = (fp[i] - fq[i]) / (2.0 * h);
            }
        }
        m
    }

    #[test]
    fn parse_and_display() {
        let m = ZooMap::parse("winding2d:k=3", 2).unwrap();
        assert_eq!(m.kind, ZooKind::Winding2d { k: 3 });
        assert_eq!(m.to_string(), "winding2d:k=3");
        assert_eq!(ZooMap::parse("fold", 3).unwrap().kind, ZooKind::Fold { a: 0.5 });
        assert!(matches!(ZooMap::parse("spiral", 2), Err(Error::UnknownMap(_))));
        assert!(ZooMap::parse("winding3d:k=2", 2).is_err());
        assert!(ZooMap::parse("winding2d:k=1.5", 2).is_err());
        assert!(ZooMap::parse("scaling:k=2", 2).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let specs = [
            ("identity", 3),
            ("scaling:c=0.5", 2),
            ("winding2d:k=2", 2),
            ("winding2d:k=3", 2),
            ("winding3d:k=2", 3),
            ("winding3d:k=3", 3),
            ("radial_stretch:alpha=2", 3),
            ("radial_stretch:alpha=0.7", 2),
            ("fold:a=0.5", 3),
        ];
        let pts = [[0.3, 0.2, -0.1], [-0.7, 0.4, 0.35], [0.1, -0.8, 0.2], [0.25, 0.05, 0.9]];
        for (spec, n) in specs {
            let f = ZooMap::parse(spec, n).unwrap();
            for p in pts {
                let p = if n == 2 { [p[0], p[1], 0.0] } else { p };
                let exact = f.derivative(&p);
                let fd = fd_jacobian(&f, &p);
                let scale = linalg::frobenius_sq(n, &exact).sqrt();
                for i in 0..n {
                    for j in 0..n {
                        assert!(
                            (exact[i][j] - fd[i][j]).abs() <= 1e-6 * scale,
                            "{spec} at {p:?}: {exact:?} vs {fd:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn distortion_of_zoo_frames() {
        let g = Grid::cube(3, 17, 1.0).unwrap();
        let region = crate::grid::Region::annulus(0.3, 0.9).unwrap();
        for (spec, k) in [
            ("winding3d:k=2", 4.0),
            ("winding3d:k=3", 9.0),
            ("radial_stretch:alpha=2", 4.0),
        ] {
            let f = ZooMap::parse(spec, 3).unwrap();
            assert_eq!(f.distortion(), k);
            let d = f.exact_frame(&g).distortion(&region).unwrap();
            let vals: Vec<f64> = d.nodes.iter().map(|&i| d.field[i]).collect();
            // Constant distortion away from the axis.
            assert!(vals.iter().all(|v| (v - k).abs() < 1e-9 * k), "{spec}");
        }
    }

    #[test]
    fn fold_profile_values() {
        let f = ZooMap::parse("fold:a=0.5", 2).unwrap();
        assert_eq!(f.eval(&[0.5, 0.0, 0.0]), [0.5, 0.0, 0.0]);
        assert!((f.eval(&[1.0, 0.0, 0.0])[0] - 0.25).abs() < 1e-15);
    }
}
