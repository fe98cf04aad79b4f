//! Diagnostics for minimizers: the weak Euler–Lagrange residual, Caccioppoli
//! bounds, reverse Hölder ratios and higher-integrability probes.

use serde::{Deserialize, Serialize};

use crate::energy::{flatten, Objective};
use crate::error::{Error, Result};
use crate::frame::{hs_norm, Frame};
use crate::grid::{norm, Annulus, Grid, Point, Quadrature, Region};
use crate::sphere::fibonacci_directions;

/// Slack allowed on the Caccioppoli bounds.
pub const CACCIOPPOLI_SLACK: f64 = 0.05;
pub const EL_PANEL_SIZE: usize = 10;
pub const BALL_PANEL_SIZE: usize = 20;

/// `β(t) = (1 − t²)³` on `|t| < 1`, zero elsewhere; C² with compact support.
fn beta(t: f64) -> (f64, f64) {
    if t.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let u = 1.0 - t * t;
    (u * u * u, -6.0 * t * u * u)
}

/// Non-negative C² bump functions supported in an annulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TestFunction {
    /// `β((|x| − center)/width)`.
    Radial {
        center: f64,
        width: f64,
    },
    /// `∏_a β((x_a − center_a)/width)`.
    Tensor {
        center: Point,
        width: f64,
    },
    Zero,
}

impl TestFunction {
    pub fn eval(&self, n: usize, x: &Point) -> f64 {
        match *self {
            TestFunction::Radial { center, width } => beta((norm(x) - center) / width).0,
            TestFunction::Tensor { center, width } => (0..n).map(|a| beta((x[a] - center[a]) / width).0).product(),
            TestFunction::Zero => 0.0,
        }
    }

    pub fn gradient(&self, n: usize, x: &Point) -> Point {
        let mut g = [0.0; 3];
        match *self {
            TestFunction::Radial { center, width } => {
                let s = norm(x);
                let (_, db) = beta((s - center) / width);
                if s > 0.0 && db != 0.0 {
                    for a in 0..n {
                        g[a] = db / width * x[a] / s;
                    }
                }
            }
            TestFunction::Tensor { center, width } => {
                let parts: Vec<(f64, f64)> = (0..n).map(|a| beta((x[a] - center[a]) / width)).collect();
                for a in 0..n {
                    g[a] = parts[a].1 / width * (0..n).filter(|&b| b != a).map(|b| parts[b].0).product::<f64>();
                }
            }
            TestFunction::Zero => {}
        }
        g
    }

    /// Whether the closed support lies in the open annulus.
    pub fn support_inside(&self, n: usize, annulus: &Annulus) -> bool {
        match *self {
            TestFunction::Radial { center, width } => {
                width > 0.0 && center - width > annulus.inner && center + width < annulus.outer
            }
            TestFunction::Tensor { center, width } => {
                if !(width > 0.0) {
                    return false;
                }
                let (mut near, mut far) = (0.0, 0.0);
                for &c in &center[..n] {
                    let (lo, hi) = (c - width, c + width);
                    let closest = if lo > 0.0 {
                        lo
                    } else if hi < 0.0 {
                        hi
                    } else {
                        0.0
                    };
                    near += closest * closest;
                    far += lo.abs().max(hi.abs()).powi(2);
                }
                near.sqrt() > annulus.inner && far.sqrt() < annulus.outer
            }
            TestFunction::Zero => true,
        }
    }

    /// Five radial bumps across the annulus and five tensor bumps centered on
    /// the middle sphere.
    pub fn panel(n: usize, annulus: &Annulus) -> Vec<TestFunction> {
        let (r, big_r) = (annulus.inner, annulus.outer);
        let width = big_r - r;
        let mut panel: Vec<TestFunction> = [0.3, 0.4, 0.5, 0.6, 0.7]
            .iter()
            .map(|f| TestFunction::Radial {
                center: r + f * width,
                width: 0.2 * width,
            })
            .collect();
        let mid = 0.5 * (r + big_r);
        for d in fibonacci_directions(n, EL_PANEL_SIZE / 2) {
            panel.push(TestFunction::Tensor {
                center: [mid * d[0], mid * d[1], mid * d[2]],
                width: 0.2 * width,
            });
        }
        panel
    }

    fn check(&self, n: usize, annulus: &Annulus) -> Result<()> {
        if self.support_inside(n, annulus) {
            Ok(())
        } else {
            Err(Error::invalid(
                "test function",
                format!(
                    "support of {self:?} is not inside A({}, {})",
                    annulus.inner, annulus.outer
                ),
            ))
        }
    }
}

/// `B(center, radius)` with `2B̄ ⊂ A` required by the ball diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn doubled_inside(&self, annulus: &Annulus) -> bool {
        let c = norm(&self.center);
        c - 2.0 * self.radius > annulus.inner && c + 2.0 * self.radius < annulus.outer
    }

    /// `count` balls of radius `(R − r)/8` centered on the middle sphere.
    pub fn panel(n: usize, annulus: &Annulus, count: usize) -> Vec<Ball> {
        let mid = 0.5 * (annulus.inner + annulus.outer);
        let radius = (annulus.outer - annulus.inner) / 8.0;
        fibonacci_directions(n, count)
            .into_iter()
            .map(|d| Ball {
                center: [mid * d[0], mid * d[1], mid * d[2]],
                radius,
            })
            .collect()
    }

    fn check(&self, annulus: &Annulus) -> Result<()> {
        if self.doubled_inside(annulus) {
            Ok(())
        } else {
            Err(Error::invalid(
                "ball",
                format!(
                    "2B̄ for B({:?}, {}) is not inside A({}, {})",
                    self.center, self.radius, annulus.inner, annulus.outer
                ),
            ))
        }
    }

    fn region(&self, factor: f64) -> Region {
        Region::ball(self.center, factor * self.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElResidual {
    pub test: TestFunction,
    /// `∫ ⟨|dρ|₂^{q−2} dρ, d(hρ)⟩`.
    pub value: f64,
    /// `|value| / (‖dρ‖_q^{q−1} ‖d(hρ)‖_q)`, in `[0, 1]` by Hölder.
    pub normalized: f64,
}

/// Euler–Lagrange residuals for a panel of test functions, using the same
/// discrete exterior derivative and quadrature as the minimizer.
pub fn el_residuals(frame: &Frame, q: f64, annulus: Annulus, tests: &[TestFunction]) -> Result<Vec<ElResidual>> {
    let grid = frame.grid();
    let n = grid.dim();
    for t in tests {
        t.check(n, &annulus)?;
    }
    let obj = Objective::new(grid, q, 1.0, annulus, 0.0)?;
    let x = flatten(frame);
    let mut grad = vec![0.0; x.len()];
    obj.value_and_gradient(&x, 0.0, &mut grad);
    let energy_norm = obj.exact_energy(&x).powf((q - 1.0) / q);
    let len = grid.len();
    Ok(tests
        .iter()
        .map(|&test| {
            let h: Vec<f64> = (0..len).map(|i| test.eval(n, &grid.point(i))).collect();
            let v: Vec<f64> = x.iter().enumerate().map(|(j, xj)| h[j % len] * xj).collect();
            let value = grad.iter().zip(&v).map(|(g, vj)| g * vj).sum::<f64>() / q;
            let scale = energy_norm * obj.exact_energy(&v).powf(1.0 / q);
            let normalized = if value == 0.0 { 0.0 } else { value.abs() / scale };
            ElResidual {
                test,
                value,
                normalized,
            }
        })
        .collect())
}

pub fn el_residual(frame: &Frame, q: f64, annulus: Annulus, test: TestFunction) -> Result<ElResidual> {
    Ok(el_residuals(frame, q, annulus, &[test])?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Bound {
    fn new(lhs: f64, rhs: f64) -> Self {
        Bound {
            lhs,
            rhs,
            pass: lhs <= (1.0 + CACCIOPPOLI_SLACK) * rhs,
        }
    }
}

/// Pointwise `|ρ|₂` and `|dρ|₂` of a frame.
#[derive(Debug, Clone)]
pub struct Profile {
    grid: Grid,
    rho: Vec<f64>,
    d_rho: Vec<f64>,
}

impl Profile {
    pub fn new(frame: &Frame) -> Result<Self> {
        Ok(Profile {
            grid: frame.grid().clone(),
            rho: frame.hs_norm(),
            d_rho: hs_norm(&frame.exterior_derivative()?),
        })
    }

    fn average(&self, values: &[f64], p: f64, region: &Region) -> Result<f64> {
        Ok(Quadrature::new(&self.grid, region)?.average(values, p))
    }

    /// `(∫ |dρ|₂^q h^q)^{1/q} ≤ q (∫ |ρ|₂^q |dh|^q)^{1/q}` for `h ≥ 0`.
    pub fn caccioppoli(&self, q: f64, annulus: Annulus, test: TestFunction) -> Result<Bound> {
        let n = self.grid.dim();
        test.check(n, &annulus)?;
        let quad = Quadrature::new(&self.grid, &Region::Annulus(annulus))?;
        let lhs = quad
            .integrate_with(|i| (self.d_rho[i] * test.eval(n, &self.grid.point(i))).powf(q))
            .powf(1.0 / q);
        let rhs = q * quad
            .integrate_with(|i| (self.rho[i] * norm(&test.gradient(n, &self.grid.point(i)))).powf(q))
            .powf(1.0 / q);
        Ok(Bound::new(lhs, rhs))
    }

    /// `⟦dρ⟧_{q,B} ≤ (2q/s) ⟦ρ⟧_{q,2B}`.
    pub fn caccioppoli_ball(&self, q: f64, annulus: Annulus, ball: Ball) -> Result<Bound> {
        ball.check(&annulus)?;
        let lhs = self.average(&self.d_rho, q, &ball.region(1.0))?;
        let rhs = 2.0 * q / ball.radius * self.average(&self.rho, q, &ball.region(2.0))?;
        Ok(Bound::new(lhs, rhs))
    }

    /// `⟦ρ⟧_{n,B}ⁿ / ⟦ρ⟧_{max(n−1,q),2B}ⁿ`.
    pub fn reverse_holder(&self, q: f64, annulus: Annulus, ball: Ball) -> Result<BallRatio> {
        ball.check(&annulus)?;
        let n = self.grid.dim() as f64;
        let lhs = self.average(&self.rho, n, &ball.region(1.0))?.powf(n);
        let rhs = self.average(&self.rho, (n - 1.0).max(q), &ball.region(2.0))?.powf(n);
        Ok(BallRatio::new(ball, lhs, rhs))
    }

    /// `⟦ρ⟧_{p,B} / ⟦ρ⟧_{n,2B}`.
    pub fn higher_integrability(&self, p: f64, annulus: Annulus, ball: Ball) -> Result<BallRatio> {
        ball.check(&annulus)?;
        let n = self.grid.dim() as f64;
        let lhs = self.average(&self.rho, p, &ball.region(1.0))?;
        let rhs = self.average(&self.rho, n, &ball.region(2.0))?;
        Ok(BallRatio::new(ball, lhs, rhs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallRatio {
    pub ball: Ball,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl BallRatio {
    fn new(ball: Ball, lhs: f64, rhs: f64) -> Self {
        let ratio = if lhs == rhs { 1.0 } else { lhs / rhs };
        BallRatio { ball, lhs, rhs, ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub rows: Vec<BallRatio>,
    pub max_ratio: f64,
}

impl RatioTable {
    fn new(rows: Vec<BallRatio>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("ball panel", "panel is empty"));
        }
        let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
        Ok(RatioTable { rows, max_ratio })
    }
}

pub fn reverse_holder_check(frame: &Frame, q: f64, annulus: Annulus, balls: &[Ball]) -> Result<RatioTable> {
    let profile = Profile::new(frame)?;
    RatioTable::new(
        balls
            .iter()
            .map(|&b| profile.reverse_holder(q, annulus, b))
            .collect::<Result<_>>()?,
    )
}

/// The exponents probed above `n`.
pub fn probe_exponents(n: usize) -> [f64; 3] {
    let n = n as f64;
    [n + 0.25, n + 0.5, n + 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentRatios {
    pub p: f64,
    pub table: RatioTable,
}

pub fn higher_integrability_probe(
    frame: &Frame,
    annulus: Annulus,
    balls: &[Ball],
    exponents: &[f64],
) -> Result<Vec<ExponentRatios>> {
    let profile = Profile::new(frame)?;
    exponents
        .iter()
        .map(|&p| {
            Ok(ExponentRatios {
                p,
                table: RatioTable::new(
                    balls
                        .iter()
                        .map(|&b| profile.higher_integrability(p, annulus, b))
                        .collect::<Result<_>>()?,
                )?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliRow {
    pub ball: Ball,
    pub bound: Bound,
}

/// All minimizer diagnostics over the standard panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub el: Vec<ElResidual>,
    pub el_max: f64,
    pub caccioppoli: Vec<CaccioppoliRow>,
    /// The same bound with the panel's radial test functions.
    pub caccioppoli_bumps: Vec<Bound>,
    pub caccioppoli_pass: bool,
    pub reverse_holder: RatioTable,
    pub higher_integrability: Vec<ExponentRatios>,
}

pub fn diagnose(frame: &Frame, q: f64, annulus: Annulus) -> Result<Diagnostics> {
    let n = frame.dim();
    let tests = TestFunction::panel(n, &annulus);
    let el = el_residuals(frame, q, annulus, &tests)?;
    let el_max = el.iter().map(|e| e.normalized).fold(0.0, f64::max);
    let balls = Ball::panel(n, &annulus, BALL_PANEL_SIZE);
    let profile = Profile::new(frame)?;
    let caccioppoli = balls
        .iter()
        .map(|&ball| {
            Ok(CaccioppoliRow {
                ball,
                bound: profile.caccioppoli_ball(q, annulus, ball)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let caccioppoli_bumps = tests
        .iter()
        .map(|&t| profile.caccioppoli(q, annulus, t))
        .collect::<Result<Vec<_>>>()?;
    let caccioppoli_pass = caccioppoli.iter().all(|c| c.bound.pass) && caccioppoli_bumps.iter().all(|b| b.pass);
    let reverse_holder = RatioTable::new(
        balls
            .iter()
            .map(|&b| profile.reverse_holder(q, annulus, b))
            .collect::<Result<_>>()?,
    )?;
    let higher_integrability = probe_exponents(n)
        .iter()
        .map(|&p| {
            Ok(ExponentRatios {
                p,
                table: RatioTable::new(
                    balls
                        .iter()
                        .map(|&b| profile.higher_integrability(p, annulus, b))
                        .collect::<Result<_>>()?,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Diagnostics {
        el,
        el_max,
        caccioppoli,
        caccioppoli_bumps,
        caccioppoli_pass,
        reverse_holder,
        higher_integrability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn setup(n: usize) -> (Grid, Annulus) {
        (
            Grid::cube(n, if n == 2 { 48 } else { 24 }, 1.6).unwrap(),
            Annulus::new(0.5, 1.5).unwrap(),
        )
    }

    #[test]
    fn panels_fit_the_annulus() {
        for n in [2, 3] {
            let (_, a) = setup(n);
            let tests = TestFunction::panel(n, &a);
            assert_eq!(tests.len(), EL_PANEL_SIZE);
            assert!(tests.iter().all(|t| t.support_inside(n, &a)));
            let balls = Ball::panel(n, &a, BALL_PANEL_SIZE);
            assert_eq!(balls.len(), BALL_PANEL_SIZE);
            assert!(balls.iter().all(|b| b.doubled_inside(&a)));
        }
        let a = Annulus::new(0.5, 1.5).unwrap();
        let wide = TestFunction::Radial {
            center: 1.0,
            width: 0.6,
        };
        assert!(!wide.support_inside(3, &a));
        let g = Grid::cube(2, 24, 1.6).unwrap();
        assert!(el_residual(&Frame::standard(&g), 2.0, a, wide).is_err());
        let big = Ball {
            center: [1.0, 0.0, 0.0],
            radius: 0.3,
        };
        assert!(Profile::new(&Frame::standard(&g))
            .unwrap()
            .caccioppoli_ball(2.0, a, big)
            .is_err());
    }

    #[test]
    fn test_function_gradients_match_differences() {
        let x = [0.9, 0.35, -0.2];
        for t in [
            TestFunction::Radial {
                center: 1.0,
                width: 0.2,
            },
            TestFunction::Tensor {
                center: [0.8, 0.3, 0.0],
                width: 0.3,
            },
        ] {
            let g = t.gradient(3, &x);
            for a in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[a] += 1e-6;
                xm[a] -= 1e-6;
                let fd = (t.eval(3, &xp) - t.eval(3, &xm)) / 2e-6;
                assert!((fd - g[a]).abs() < 1e-7, "{a}: {fd} vs {}", g[a]);
            }
        }
    }

    #[test]
    fn closed_frames_have_no_residual() {
        for n in [2, 3] {
            let (g, a) = setup(n);
            let dx = Frame::standard(&g);
            for e in el_residuals(&dx, 2.0, a, &TestFunction::panel(n, &a)).unwrap() {
                assert_eq!(e.value, 0.0);
                assert_eq!(e.normalized, 0.0);
            }
            let z = el_residual(&dx, 2.0, a, TestFunction::Zero).unwrap();
            assert_eq!(z.value, 0.0);
            let d = diagnose(&dx, 2.0, a).unwrap();
            assert!(d.caccioppoli_pass);
            assert!(d.caccioppoli.iter().all(|c| c.bound.lhs == 0.0));
        }
    }

    #[test]
    fn constant_frames_have_unit_ratios() {
        for n in [2, 3] {
            let (g, a) = setup(n);
            let balls = Ball::panel(n, &a, BALL_PANEL_SIZE);
            for c in [1.0, 2.5] {
                let mut m: Mat = crate::linalg::ZERO;
                for (i, row) in m.iter_mut().enumerate().take(n) {
                    row[i] = c;
                }
                let f = Frame::constant(&g, m);
                let rh = reverse_holder_check(&f, 2.0, a, &balls).unwrap();
                assert!(
                    rh.rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-12),
                    "{:?}",
                    rh.max_ratio
                );
                for e in higher_integrability_probe(&f, a, &balls, &probe_exponents(n)).unwrap() {
                    assert!(e.table.rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-12));
                }
            }
        }
        let (g, a) = setup(2);
        assert!(reverse_holder_check(&Frame::standard(&g), 2.0, a, &[]).is_err());
    }

    #[test]
    fn residual_detects_non_stationary_frames() {
        // A rotation field with a radial twist is not closed and not stationary.
        let (g, a) = setup(2);
        let f = Frame::from_matrix_fn(&g, |x| {
            let t = 0.6 * norm(x);
            let mut m = crate::linalg::ZERO;
            m[0][0] = t.cos();
            m[0][1] = -t.sin();
            m[1][0] = t.sin();
            m[1][1] = t.cos();
            m
        });
        let e = el_residuals(&f, 2.0, a, &TestFunction::panel(2, &a)).unwrap();
        let worst = e.iter().map(|r| r.normalized).fold(0.0, f64::max);
        assert!(worst > 1e-2 && worst <= 1.0 + 1e-12, "{worst}");
    }
}
