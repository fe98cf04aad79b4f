//! Quasiconformal gluing of an inner frame `ρ₀` and an outer frame `ρ₁`
//! across an annulus `A(r, R)`.
//!
//! With `r < r' < R' < R` and `r₀ = (r' + R')/2`, the radial maps
//! `λ₀: A(r, r₀) → A(r, r')` and `λ₁: A(r₀, R) → A(R', R)` pull the collar
//! data inwards, and a cutoff `θ(|x|)` vanishing near `r₀` separates them:
//!
//! ```text
//! ρ = ρ₀               on B(r)
//!     θ · λ₀*ρ₀        on A(r, r₀)
//!     θ · λ₁*ρ₁        on A(r₀, R)
//!     ρ₁               outside B(R)
//! ```

use serde::{Deserialize, Serialize};

use crate::degree::SampledMap;
use crate::error::{Error, Result};
use crate::form::{pullback_coefficients, FormField, Interpolator};
use crate::frame::{Distortion, Frame};
use crate::grid::{norm, Grid, Point, Region};
use crate::linalg::{self, Mat};
use crate::zoo::ZooMap;

/// Fraction of each cutoff ramp spent in the smoothstep transitions of `θ'`.
pub const RAMP_FRACTION: f64 = 0.2;
/// Half-width of the `θ = 0` collar as a fraction of `R' − r'`.
pub const ZERO_COLLAR_FRACTION: f64 = 1.0 / 16.0;

/// Radii `r < r' < R' < R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    pub r: f64,
    pub r_prime: f64,
    pub big_r_prime: f64,
    pub big_r: f64,
}

impl Radii {
    pub fn new(r: f64, r_prime: f64, big_r_prime: f64, big_r: f64) -> Result<Self> {
        let radii = Radii {
            r,
            r_prime,
            big_r_prime,
            big_r,
        };
        radii.validate()?;
        Ok(radii)
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [a, b, c, d] => Radii::new(*a, *b, *c, *d),
            _ => Err(Error::invalid(
                "radii",
                format!("expected four radii r,r',R',R, got {}", v.len()),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = [self.r, self.r_prime, self.big_r_prime, self.big_r];
        if !(v[0] > 0.0 && v.windows(2).all(|w| w[0] < w[1]) && v[3].is_finite()) {
            return Err(Error::invalid("radii", format!("need 0 < r < r' < R' < R, got {v:?}")));
        }
        Ok(())
    }

    /// `r₀ = (r' + R')/2`.
    pub fn middle(&self) -> f64 {
        0.5 * (self.r_prime + self.big_r_prime)
    }

    pub fn annulus(&self) -> Region {
        Region::annulus(self.r, self.big_r).expect("validated radii")
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.r, self.r_prime, self.big_r_prime, self.big_r]
    }
}

/// Radial map `x ↦ (slope·(|x| − s₀) + c₀)·x/|x|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialMap {
    pub n: usize,
    pub slope: f64,
    pub s0: f64,
    pub c0: f64,
}

impl RadialMap {
    /// `λ₀: A(r, r₀) → A(r, r')`.
    pub fn inner(n: usize, radii: &Radii) -> Self {
        let r0 = radii.middle();
        RadialMap {
            n,
            slope: (radii.r_prime - radii.r) / (r0 - radii.r),
            s0: radii.r,
            c0: radii.r,
        }
    }

    /// `λ₁: A(r₀, R) → A(R', R)`.
    pub fn outer(n: usize, radii: &Radii) -> Self {
        let r0 = radii.middle();
        RadialMap {
            n,
            slope: (radii.big_r - radii.big_r_prime) / (radii.big_r - r0),
            s0: r0,
            c0: radii.big_r_prime,
        }
    }

    /// Uniform scaling `x ↦ c·x` (for tests of the pull-back).
    pub fn scaling(n: usize, c: f64) -> Self {
        RadialMap {
            n,
            slope: c,
            s0: 0.0,
            c0: 0.0,
        }
    }

    fn profile(&self, s: f64) -> f64 {
        self.slope * (s - self.s0) + self.c0
    }
}

impl SampledMap for RadialMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &Point) -> Point {
        let s = norm(x);
        if s == 0.0 {
            return [0.0; 3];
        }
        let g = self.profile(s) / s;
        [g * x[0], g * x[1], g * x[2]]
    }

    fn jacobian(&self, x: &Point) -> Option<Mat> {
        let s = norm(x);
        if s == 0.0 {
            return Some(linalg::scale(self.n, &linalg::identity(self.n), self.slope));
        }
        let tangential = self.profile(s) / s;
        let u = [x[0] / s, x[1] / s, x[2] / s];
        let mut m = linalg::ZERO;
        for i in 0..self.n {
            for j in 0..self.n {
                let p = u[i] * u[j];
                m[i][j] = self.slope * p + tangential * (if i == j { 1.0 } else { 0.0 } - p);
            }
        }
        Some(m)
    }
}

/// Pull-back `(λ*ω)(x) = ω(λ(x)) ∘ Dλ(x)` on the form's own grid; returns the
/// form and the number of nodes whose image fell outside the grid.
pub fn pullback(lambda: &dyn SampledMap, form: &FormField) -> Result<(FormField, usize)> {
    let grid = form.grid();
    let n = grid.dim();
    if lambda.dim() != n {
        return Err(Error::invalid("map", "dimension mismatch"));
    }
    let interp = form.interpolator();
    let mut out = FormField::zeros(grid, form.degree())?;
    let mut clipped = 0;
    let mut buf = vec![0.0; form.components().len()];
    for idx in 0..grid.len() {
        let x = grid.point(idx);
        let jac = lambda
            .jacobian(&x)
            .ok_or_else(|| Error::invalid("map", "pull-back needs a differentiable map"))?;
        if interp.eval_into(&lambda.eval(&x), &mut buf) {
            clipped += 1;
        }
        let v = pullback_coefficients(n, form.degree(), &buf, &jac);
        for (c, val) in out.components_mut().iter_mut().zip(v) {
            c[idx] = val;
        }
    }
    Ok((out, clipped))
}

/// Where the inner or outer frame comes from.
#[derive(Debug, Clone)]
pub enum FrameSource {
    /// `df` of a closed-form map.
    Map(ZooMap),
    /// A sampled frame, interpolated off-grid.
    Sampled(Frame),
}

impl FrameSource {
    pub fn dim(&self) -> usize {
        match self {
            FrameSource::Map(m) => m.n,
            FrameSource::Sampled(f) => f.dim(),
        }
    }

    fn sampler(&self) -> Sampler<'_> {
        match self {
            FrameSource::Map(m) => Sampler::Map(m),
            FrameSource::Sampled(f) => {
                let comps: Vec<Vec<f64>> = f
                    .members()
                    .iter()
                    .flat_map(|m| m.components().iter().cloned())
                    .collect();
                Sampler::Grid(Box::new(Interpolator::new(f.grid(), &comps)), f.dim())
            }
        }
    }

    /// The source frame evaluated at the nodes of `grid`.
    pub fn on_grid(&self, grid: &Grid) -> Frame {
        let s = self.sampler();
        Frame::from_matrix_fn(grid, |p| s.matrix(p).0)
    }
}

enum Sampler<'a> {
    Map(&'a ZooMap),
    Grid(Box<Interpolator>, usize),
}

impl Sampler<'_> {
    fn matrix(&self, p: &Point) -> (Mat, bool) {
        match self {
            Sampler::Map(m) => (m.derivative(p), false),
            Sampler::Grid(interp, n) => {
                let mut buf = [0.0; 9];
                let clipped = interp.eval_into(p, &mut buf[..n * n]);
                let mut m = linalg::ZERO;
                for i in 0..*n {
                    for j in 0..*n {
                        m[i][j] = buf[i * n + j];
                    }
                }
                (m, clipped)
            }
        }
    }
}

/// Cutoff `θ(t)`: one on `[0, r']` and `[R', ∞)`, zero on
/// `[r₀ − δ, r₀ + δ]`, with C² transitions whose slope stays below
/// `3/(R' − r')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub r_prime: f64,
    pub big_r_prime: f64,
    pub delta: f64,
}

impl Cutoff {
    pub fn new(radii: &Radii) -> Self {
        Cutoff {
            r_prime: radii.r_prime,
            big_r_prime: radii.big_r_prime,
            delta: ZERO_COLLAR_FRACTION * (radii.big_r_prime - radii.r_prime),
        }
    }

    fn r0(&self) -> f64 {
        0.5 * (self.r_prime + self.big_r_prime)
    }

    /// Ramp length on each side.
    fn ramp(&self) -> f64 {
        self.r0() - self.delta - self.r_prime
    }

    /// `(θ(t), θ'(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let len = self.ramp();
        let r0 = self.r0();
        if t <= self.r_prime || t >= self.big_r_prime {
            (1.0, 0.0)
        } else if t < r0 - self.delta {
            let (g, dg) = descent((t - self.r_prime) / len);
            (1.0 - g, -dg / len)
        } else if t <= r0 + self.delta {
            (0.0, 0.0)
        } else {
            let (g, dg) = descent((self.big_r_prime - t) / len);
            (1.0 - g, dg / len)
        }
    }

    pub fn max_slope(&self) -> f64 {
        1.0 / ((1.0 - RAMP_FRACTION) * self.ramp())
    }

    pub fn is_zero_at(&self, t: f64) -> bool {
        (t - self.r0()).abs() <= self.delta
    }
}

/// `G(u) = ∫₀^u g` for the trapezoid-like density `g` on `[0, 1]` with
/// smoothstep shoulders, normalized so `G(1) = 1`; returns `(G, g)`.
fn descent(u: f64) -> (f64, f64) {
    let rho = RAMP_FRACTION;
    let peak = 1.0 / (1.0 - rho);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let integral = |t: f64| t * t * t - 0.5 * t * t * t * t;
    let u = u.clamp(0.0, 1.0);
    if u < rho {
        let t = u / rho;
        (peak * rho * integral(t), peak * smooth(t))
    } else if u <= 1.0 - rho {
        (peak * (0.5 * rho + (u - rho)), peak)
    } else {
        let t = (1.0 - u) / rho;
        (
            peak * (0.5 * rho + (1.0 - 2.0 * rho) + rho * (0.5 - integral(t))),
            peak * smooth(t),
        )
    }
}

/// Inputs of the gluing construction.
#[derive(Debug, Clone)]
pub struct GlueSpec {
    pub radii: Radii,
    pub inner: FrameSource,
    pub outer: FrameSource,
    /// Distortion bound the collars must satisfy.
    pub k: f64,
}

#[derive(Debug, Clone)]
pub struct Glued {
    pub frame: Frame,
    /// Largest distortion on `A(r, R)` away from the `θ = 0` collar.
    pub k_tilde: f64,
    pub inner_collar_k: f64,
    pub outer_collar_k: f64,
    /// Nodes where `θ = 0`.
    pub zero_collar_nodes: usize,
    /// Nodes whose source point fell outside a sampled source grid.
    pub clipped: usize,
    pub cutoff: Cutoff,
}

/// Builds the glued frame on `grid`.
pub fn glue_frames(spec: &GlueSpec, grid: &Grid) -> Result<Glued> {
    let radii = spec.radii;
    radii.validate()?;
    let n = grid.dim();
    if spec.inner.dim() != n || spec.outer.dim() != n {
        return Err(Error::invalid("frames", "source dimension differs from the grid"));
    }
    if !(spec.k >= 1.0) {
        return Err(Error::invalid(
            "k",
            format!("distortion bound must be ≥ 1, got {}", spec.k),
        ));
    }
    let collar = |src: &FrameSource, lo: f64, hi: f64, name: &str| -> Result<Distortion> {
        let region = Region::annulus(lo, hi)?;
        let d = src.on_grid(grid).distortion(&region)?;
        if !d.is_k_qc(spec.k) {
            return Err(Error::CollarNotQc {
                collar: format!("{name} A({lo}, {hi})"),
                k: spec.k,
                found: d.sup,
            });
        }
        Ok(d)
    };
    let inner_d = collar(&spec.inner, radii.r, radii.r_prime, "inner")?;
    let outer_d = collar(&spec.outer, radii.big_r_prime, radii.big_r, "outer")?;

    let lambda0 = RadialMap::inner(n, &radii);
    let lambda1 = RadialMap::outer(n, &radii);
    let cutoff = Cutoff::new(&radii);
    let s0 = spec.inner.sampler();
    let s1 = spec.outer.sampler();
    let r0 = radii.middle();
    let mut frame = Frame::zeros(grid);
    // The glued frame without the cutoff; its distortion is the glued one.
    let mut unscaled = Frame::zeros(grid);
    let mut clipped = 0;
    let mut zero_collar_nodes = 0;
    for idx in 0..grid.len() {
        let x = grid.point(idx);
        let s = norm(&x);
        let (m, c) = if s <= radii.r {
            s0.matrix(&x)
        } else if s >= radii.big_r {
            s1.matrix(&x)
        } else {
            let (theta, _) = cutoff.eval(s);
            if theta == 0.0 {
                zero_collar_nodes += 1;
                frame.set_matrix(idx, &linalg::ZERO);
                continue;
            }
            let (lambda, sampler) = if s < r0 { (&lambda0, &s0) } else { (&lambda1, &s1) };
            let (src, c) = sampler.matrix(&lambda.eval(&x));
            let dl = lambda.jacobian(&x).expect("radial maps are differentiable");
            let pulled = linalg::mul(n, &src, &dl);
            unscaled.set_matrix(idx, &pulled);
            frame.set_matrix(idx, &linalg::scale(n, &pulled, theta));
            if c {
                clipped += 1;
            }
            continue;
        };
        if c {
            clipped += 1;
        }
        unscaled.set_matrix(idx, &m);
        frame.set_matrix(idx, &m);
    }
    let d = unscaled.distortion(&radii.annulus())?;
    let k_tilde = d
        .nodes
        .iter()
        .filter(|&&i| !cutoff.is_zero_at(norm(&grid.point(i))))
        .map(|&i| d.field[i])
        .fold(1.0, f64::max);
    Ok(Glued {
        frame,
        k_tilde,
        inner_collar_k: inner_d.sup,
        outer_collar_k: outer_d.sup,
        zero_collar_nodes,
        clipped,
        cutoff,
    })
}
