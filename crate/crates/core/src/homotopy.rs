//! The Poincaré homotopy operator `K_y`, its mollifier average `𝒯`, and the
//! scaled and translated variants `𝒯_{r,x₀}`.
//!
//! `(K_y ω)(x) = ∫₀¹ t^{ℓ−1} ι_{x−y} ω(y + t(x−y)) dt` and
//! `𝒯_{r,x₀} ω = ∫ φ_{r,x₀}(y) K_y ω dy`, where `φ_{r,x₀}` is the unit-scale
//! mollifier moved to `x₀` and dilated by `r`. Writing out
//! `λ*_{1/r} ∘ 𝒯 ∘ λ*_r` gives exactly this average, so the conjugated
//! operator is evaluated directly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{axes_of, binomial, multi_indices, FormField, Interpolator};
use crate::frame::Frame;
use crate::grid::{dist, Grid, Point};

/// Quadrature settings for the segment and mollifier integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomotopyConfig {
    /// Gauss–Legendre points on `t ∈ [0, 1]`.
    pub segment_points: usize,
    /// Cell-midpoint nodes per axis over `[−¼, ¼]ⁿ`, clipped to `B(¼)`.
    pub average_points: usize,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        HomotopyConfig {
            segment_points: 16,
            average_points: 8,
        }
    }
}

impl HomotopyConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.segment_points < 8 {
            return Err(Error::invalid(
                "segment_points",
                format!("need at least 8, got {}", self.segment_points),
            ));
        }
        let count = Mollifier::new(n, self.average_points).nodes.len();
        if count < 4usize.pow(n as u32) {
            return Err(Error::invalid(
                "average_points",
                format!(
                    "{count} mollifier nodes inside B(1/4), need at least {}",
                    4usize.pow(n as u32)
                ),
            ));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[m - 1 - i] = 0.5 * (x + 1.0);
        weights[m - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `P_m(x)` and `P_m'(x)` by the three-term recurrence.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Discrete mollifier `φ(y) ∝ exp(−1/(1 − |4y|²))` on `B(¼)`.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub nodes: Vec<Point>,
    /// Normalized so that they sum to one.
    pub weights: Vec<f64>,
}

impl Mollifier {
    pub fn new(n: usize, per_axis: usize) -> Self {
        let step = 0.5 / per_axis as f64;
        let coord = |i: usize| -0.25 + (i as f64 + 0.5) * step;
        let mut nodes = Vec::new();
        let mut raw = Vec::new();
        let k = if n == 3 { per_axis } else { 1 };
        for i in 0..per_axis {
            for j in 0..per_axis {
                for l in 0..k {
                    let y = [coord(i), coord(j), if n == 3 { coord(l) } else { 0.0 }];
                    let s = 16.0 * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
                    if s < 1.0 {
                        nodes.push(y);
                        raw.push((-1.0 / (1.0 - s)).exp());
                    }
                }
            }
        }
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|w| w / total).collect();
        Mollifier { nodes, weights }
    }

    /// `∫ φ` under the node quadrature, which is one by construction.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Anything that yields form coefficients at arbitrary points.
pub trait FormSource: Sync {
    fn ncomp(&self) -> usize;
    /// Writes coefficients at `z` into `out`; returns true if `z` had to be
    /// clamped into the sampled domain.
    fn eval(&self, z: &Point, out: &mut [f64]) -> bool;
}

impl FormSource for Interpolator {
    fn ncomp(&self) -> usize {
        Interpolator::ncomp(self)
    }

    fn eval(&self, z: &Point, out: &mut [f64]) -> bool {
        self.eval_into(z, out)
    }
}

/// Closed-form coefficients `z ↦ ω(z)`.
pub struct FnSource<F> {
    pub ncomp: usize,
    pub f: F,
}

impl<F: Fn(&Point, &mut [f64]) + Sync> FormSource for FnSource<F> {
    fn ncomp(&self) -> usize {
        self.ncomp
    }

    fn eval(&self, z: &Point, out: &mut [f64]) -> bool {
        (self.f)(z, out);
        false
    }
}

/// Interior-product bookkeeping for `ι_v` on ℓ-forms: for each input
/// component, the `(output component, axis, sign)` terms.
#[derive(Debug, Clone)]
struct Contraction {
    terms: Vec<Vec<(usize, usize, f64)>>,
    out_len: usize,
}

impl Contraction {
    fn new(n: usize, degree: usize) -> Self {
        let out_masks = multi_indices(n, degree - 1);
        let terms = multi_indices(n, degree)
            .into_iter()
            .map(|mask| {
                axes_of(mask)
                    .into_iter()
                    .enumerate()
                    .map(|(pos, axis)| {
                        let rest = mask & !(1 << axis);
                        let co = out_masks.iter().position(|&m| m == rest).unwrap();
                        let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                        (co, axis, sign)
                    })
                    .collect()
            })
            .collect();
        Contraction {
            terms,
            out_len: out_masks.len(),
        }
    }

    #[inline]
    fn apply(&self, v: &Point, coeffs: &[f64], scale: f64, out: &mut [f64]) {
        for (terms, &c) in self.terms.iter().zip(coeffs) {
            for &(co, axis, sign) in terms {
                out[co] += scale * sign * v[axis] * c;
            }
        }
    }
}

/// One form inside a stacked source: its degree and component offset.
#[derive(Debug, Clone)]
struct Block {
    degree: usize,
    offset: usize,
    ncomp: usize,
    contraction: Contraction,
}

/// `𝒯_{r,x₀}` with fixed quadrature.
#[derive(Debug, Clone)]
pub struct Homotopy {
    n: usize,
    pub config: HomotopyConfig,
    pub scale: f64,
    pub center: Point,
    /// Mollifier nodes already moved to `x₀ + r·y`.
    centers: Vec<Point>,
    weights: Vec<f64>,
    t_nodes: Vec<f64>,
    t_weights: Vec<f64>,
}

/// Result of evaluating an operator on grid nodes.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub form: FormField,
    /// Number of interpolation points that fell outside the source grid.
    pub clipped: usize,
}

impl Homotopy {
    pub fn new(n: usize, config: HomotopyConfig, scale: f64, center: Point) -> Result<Self> {
        config.validate(n)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("scale", format!("must be positive, got {scale}")));
        }
        let moll = Mollifier::new(n, config.average_points);
        let centers = moll
            .nodes
            .iter()
            .map(|y| {
                let mut p = [0.0; 3];
                for a in 0..n {
                    p[a] = center[a] + scale * y[a];
                }
                p
            })
            .collect();
        let (t_nodes, t_weights) = gauss_legendre(config.segment_points);
        Ok(Homotopy {
            n,
            config,
            scale,
            center,
            centers,
            weights: moll.weights,
            t_nodes,
            t_weights,
        })
    }

    /// Unit-scale operator centered at the origin.
    pub fn unit(n: usize) -> Self {
        Homotopy::new(n, HomotopyConfig::default(), 1.0, [0.0; 3]).expect("default config")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Errors unless the scaled mollifier support `B(x₀, r/4)` lies in the grid.
    pub fn check_support(&self, grid: &Grid) -> Result<()> {
        if !grid.covers_ball(&self.center, 0.25 * self.scale) {
            return Err(Error::SupportNotCovered(format!(
                "B({:?}, {}) leaves the grid box",
                &self.center[..self.n],
                0.25 * self.scale
            )));
        }
        Ok(())
    }

    fn blocks(&self, degrees: &[usize]) -> Vec<Block> {
        let mut offset = 0;
        degrees
            .iter()
            .map(|&degree| {
                let ncomp = binomial(self.n, degree);
                let b = Block {
                    degree,
                    offset,
                    ncomp,
                    contraction: Contraction::new(self.n, degree),
                };
                offset += ncomp;
                b
            })
            .collect()
    }

    /// Applies `K_y` for the given centers/weights to every block at `x`.
    fn kernel(
        &self,
        src: &dyn FormSource,
        blocks: &[Block],
        centers: &[Point],
        weights: &[f64],
        x: &Point,
        out: &mut [Vec<f64>],
    ) -> usize {
        let total = src.ncomp();
        let mut buf = vec![0.0; total];
        let mut acc = vec![0.0; total];
        let mut clipped = 0;
        for o in out.iter_mut() {
            o.iter_mut().for_each(|v| *v = 0.0);
        }
        let tpow: Vec<Vec<f64>> = blocks
            .iter()
            .map(|b| {
                self.t_nodes
                    .iter()
                    .zip(&self.t_weights)
                    .map(|(&t, &w)| w * t.powi(b.degree as i32 - 1))
                    .collect()
            })
            .collect();
        for (y, &wy) in centers.iter().zip(weights) {
            let v = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
            if v == [0.0; 3] {
                continue;
            }
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, &t) in self.t_nodes.iter().enumerate() {
                let z = [y[0] + t * v[0], y[1] + t * v[1], y[2] + t * v[2]];
                if src.eval(&z, &mut buf) {
                    clipped += 1;
                }
                for (b, tp) in blocks.iter().zip(&tpow) {
                    let wt = tp[k];
                    for c in b.offset..b.offset + b.ncomp {
                        acc[c] += wt * buf[c];
                    }
                }
            }
            for (b, o) in blocks.iter().zip(out.iter_mut()) {
                b.contraction.apply(&v, &acc[b.offset..b.offset + b.ncomp], wy, o);
            }
        }
        clipped
    }

    /// `(𝒯ω)(x)` for each block of a stacked source, at an arbitrary point.
    fn at_stacked(&self, src: &dyn FormSource, degrees: &[usize], x: &Point) -> (Vec<Vec<f64>>, usize) {
        let blocks = self.blocks(degrees);
        let mut out: Vec<Vec<f64>> = blocks.iter().map(|b| vec![0.0; b.contraction.out_len]).collect();
        let clipped = self.kernel(src, &blocks, &self.centers, &self.weights, x, &mut out);
        (out, clipped)
    }

    /// `(𝒯ω)(x)` for a single ℓ-form source.
    pub fn at(&self, src: &dyn FormSource, degree: usize, x: &Point) -> Result<Vec<f64>> {
        if degree == 0 || degree > self.n {
            return Err(Error::Degree(format!("𝒯 needs 1 ≤ ℓ ≤ n, got {degree}")));
        }
        Ok(self.at_stacked(src, &[degree], x).0.remove(0))
    }

    /// `(K_y ω)(x)` for a single source.
    pub fn poincare_at(&self, src: &dyn FormSource, degree: usize, y: &Point, x: &Point) -> Vec<f64> {
        let blocks = self.blocks(&[degree]);
        let mut out = vec![vec![0.0; blocks[0].contraction.out_len]];
        self.kernel(src, &blocks, &[*y], &[1.0], x, &mut out);
        out.remove(0)
    }

    /// Evaluates `𝒯` on a stack of same-grid forms at the selected nodes;
    /// unselected nodes are left at zero.
    pub fn apply_many(&self, forms: &[&FormField], nodes: &[usize]) -> Result<Vec<Evaluated>> {
        let grid = forms
            .first()
            .ok_or_else(|| Error::invalid("forms", "empty stack"))?
            .grid()
            .clone();
        if forms.iter().any(|f| !f.grid().same_shape(&grid)) {
            return Err(Error::GridMismatch);
        }
        if let Some(f) = forms.iter().find(|f| f.degree() == 0) {
            return Err(Error::Degree(format!("𝒯 needs ℓ ≥ 1, got {}", f.degree())));
        }
        self.check_support(&grid)?;
        let degrees: Vec<usize> = forms.iter().map(|f| f.degree()).collect();
        let comps: Vec<Vec<f64>> = forms.iter().flat_map(|f| f.components().iter().cloned()).collect();
        let interp = Interpolator::new(&grid, &comps);
        let blocks = self.blocks(&degrees);
        let results: Vec<(Vec<Vec<f64>>, usize)> = nodes
            .par_iter()
            .map(|&idx| {
                let mut out: Vec<Vec<f64>> = blocks.iter().map(|b| vec![0.0; b.contraction.out_len]).collect();
                let x = grid.point(idx);
                let c = self.kernel(&interp, &blocks, &self.centers, &self.weights, &x, &mut out);
                (out, c)
            })
            .collect();
        let mut outputs: Vec<Evaluated> = degrees
            .iter()
            .map(|&d| Evaluated {
                form: FormField::zeros(&grid, d - 1).expect("degree"),
                clipped: 0,
            })
            .collect();
        for (&idx, (vals, clipped)) in nodes.iter().zip(results) {
            for (o, v) in outputs.iter_mut().zip(vals) {
                for (c, x) in o.form.components_mut().iter_mut().zip(v) {
                    c[idx] = x;
                }
                o.clipped += clipped;
            }
        }
        Ok(outputs)
    }

    /// `𝒯ω` at the selected nodes.
    pub fn apply(&self, form: &FormField, nodes: &[usize]) -> Result<Evaluated> {
        Ok(self.apply_many(&[form], nodes)?.remove(0))
    }

    /// `𝒯ω` at every node.
    pub fn apply_all(&self, form: &FormField) -> Result<Evaluated> {
        let nodes: Vec<usize> = (0..form.grid().len()).collect();
        self.apply(form, &nodes)
    }

    /// Componentwise `𝒯ρ = (𝒯ρ₁, …, 𝒯ρₙ)` at the selected nodes.
    pub fn potential_map(&self, frame: &Frame, nodes: &[usize]) -> Result<Vec<Vec<f64>>> {
        let members: Vec<&FormField> = frame.members().iter().collect();
        Ok(self
            .apply_many(&members, nodes)?
            .into_iter()
            .map(|e| e.form.components()[0].clone())
            .collect())
    }

    /// `𝒯ρ(x)` at an arbitrary point from a frame interpolator
    /// (components member-major).
    pub fn potential_at(&self, frame_interp: &Interpolator, x: &Point) -> Vec<f64> {
        let degrees = vec![1; self.n];
        self.at_stacked(frame_interp, &degrees, x)
            .0
            .into_iter()
            .map(|v| v[0])
            .collect()
    }

    /// `sup_{B(x₀, r/2)} |ω − d𝒯ω − 𝒯dω|` with the Euclidean coefficient norm.
    pub fn chain_residual(&self, form: &FormField) -> Result<f64> {
        Ok(self.chain_residuals(std::slice::from_ref(form))?[0])
    }

    /// [`Homotopy::chain_residual`] for several same-grid forms, sharing one
    /// interpolation pass.
    pub fn chain_residuals(&self, forms: &[FormField]) -> Result<Vec<f64>> {
        let grid = forms
            .first()
            .ok_or_else(|| Error::invalid("forms", "empty family"))?
            .grid();
        let n = grid.dim();
        for f in forms {
            let l = f.degree();
            if l == 0 || l >= n {
                return Err(Error::Degree(format!("chain residual needs 1 ≤ ℓ ≤ n−1, got {l}")));
            }
        }
        let radius = 0.5 * self.scale;
        // d𝒯ω at the inner nodes reads 𝒯ω up to two nodes away.
        let reach = radius + 2.0 * grid.spacing() * (1.0 + 1e-9);
        let near = nodes_within(grid, &self.center, reach);
        let (inner, shell): (Vec<usize>, Vec<usize>) = near
            .iter()
            .partition(|&&i| dist(&grid.point(i), &self.center) <= radius);
        if inner.is_empty() {
            return Err(Error::EmptyRegion(format!("B({:?}, {radius})", &self.center[..n])));
        }
        let dforms = forms
            .iter()
            .map(FormField::exterior_derivative)
            .collect::<Result<Vec<_>>>()?;
        let stack: Vec<&FormField> = forms.iter().chain(&dforms).collect();
        let mut on_inner = self.apply_many(&stack, &inner)?;
        let t_dforms = on_inner.split_off(forms.len());
        let on_shell = self.apply_many(&forms.iter().collect::<Vec<_>>(), &shell)?;
        let mut out = Vec::with_capacity(forms.len());
        for (k, form) in forms.iter().enumerate() {
            let mut t_form = on_inner[k].form.clone();
            for (c, s) in t_form.components_mut().iter_mut().zip(on_shell[k].form.components()) {
                for &i in &shell {
                    c[i] = s[i];
                }
            }
            let d_t_form = t_form.exterior_derivative()?;
            let t_dform = &t_dforms[k].form;
            let mut worst: f64 = 0.0;
            for &idx in &inner {
                let mut s = 0.0;
                for c in 0..form.components().len() {
                    let r = form.components()[c][idx] - d_t_form.components()[c][idx] - t_dform.components()[c][idx];
                    s += r * r;
                }
                worst = worst.max(s.sqrt());
            }
            out.push(worst);
        }
        Ok(out)
    }
}

/// Grid nodes within `radius` of `center`.
pub fn nodes_within(grid: &Grid, center: &Point, radius: f64) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| dist(&grid.point(i), center) <= radius)
        .collect()
}

/// `K_y ω` at every node of the form's grid.
pub fn poincare_ky(form: &FormField, y: &Point, config: HomotopyConfig) -> Result<Evaluated> {
    let grid = form.grid();
    if !grid.contains(y) {
        return Err(Error::OutsideGrid(*y));
    }
    if form.degree() == 0 {
        return Err(Error::Degree("K_y needs ℓ ≥ 1".into()));
    }
    let op = Homotopy::new(grid.dim(), config, 1.0, [0.0; 3])?;
    let interp = form.interpolator();
    let blocks = op.blocks(&[form.degree()]);
    let mut out = FormField::zeros(grid, form.degree() - 1)?;
    let mut clipped = 0;
    let mut buf = vec![vec![0.0; blocks[0].contraction.out_len]];
    for idx in 0..grid.len() {
        clipped += op.kernel(&interp, &blocks, &[*y], &[1.0], &grid.point(idx), &mut buf);
        for (c, v) in out.components_mut().iter_mut().zip(&buf[0]) {
            c[idx] = *v;
        }
    }
    Ok(Evaluated { form: out, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for k in 0..31 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert!((q - 1.0 / (k + 1) as f64).abs() < 1e-14, "k={k}");
        }
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn mollifier_mass_and_support() {
        for n in [2, 3] {
            let m = Mollifier::new(n, 8);
            assert!((m.mass() - 1.0).abs() < 1e-12);
            assert!(m.nodes.iter().all(|y| crate::grid::norm(y) < 0.25));
            assert!(m.weights.iter().all(|&w| w > 0.0));
            assert!(m.nodes.len() >= 4usize.pow(n as u32));
        }
        assert!(HomotopyConfig {
            segment_points: 4,
            average_points: 8
        }
        .validate(3)
        .is_err());
        assert!(HomotopyConfig {
            segment_points: 16,
            average_points: 2
        }
        .validate(2)
        .is_err());
    }

    #[test]
    fn ky_of_dx1_is_displacement() {
        let g = Grid::cube(2, 17, 1.0).unwrap();
        let w = FormField::basis(&g, 0b01).unwrap();
        let y = [0.1, -0.2, 0.0];
        let k = poincare_ky(&w, &y, HomotopyConfig::default()).unwrap();
        assert_eq!(k.clipped, 0);
        for i in 0..g.len() {
            let x = g.point(i);
            assert!((k.form.components()[0][i] - (x[0] - y[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn ky_of_area_form() {
        let g = Grid::cube(2, 17, 1.0).unwrap();
        let w = FormField::basis(&g, 0b11).unwrap();
        let y = [0.25, 0.0, 0.0];
        let k = poincare_ky(&w, &y, HomotopyConfig::default()).unwrap();
        for i in 0..g.len() {
            let x = g.point(i);
            let e1 = -0.5 * (x[1] - y[1]);
            let e2 = 0.5 * (x[0] - y[0]);
            assert!((k.form.components()[0][i] - e1).abs() < 1e-12);
            assert!((k.form.components()[1][i] - e2).abs() < 1e-12);
        }
        let at_y = g.index([10, 8, 0]);
        assert_eq!(g.point(at_y), [0.25, 0.0, 0.0]);
        assert_eq!(k.form.at(at_y), vec![0.0, 0.0]);
    }

    #[test]
    fn ky_rejects_outside_y() {
        let g = Grid::cube(2, 9, 1.0).unwrap();
        let w = FormField::basis(&g, 0b01).unwrap();
        assert!(matches!(
            poincare_ky(&w, &[2.0, 0.0, 0.0], HomotopyConfig::default()),
            Err(Error::OutsideGrid(_))
        ));
    }

    #[test]
    fn averaged_operator_needs_covered_support() {
        let g = Grid::cube(2, 9, 1.0).unwrap();
        let w = FormField::basis(&g, 0b01).unwrap();
        let op = Homotopy::new(2, HomotopyConfig::default(), 1.0, [0.9, 0.0, 0.0]).unwrap();
        assert!(matches!(op.apply_all(&w), Err(Error::SupportNotCovered(_))));
    }

    #[test]
    fn chain_residual_of_constant_form() {
        let g = Grid::cube(2, 33, 1.0).unwrap();
        let w = FormField::from_fn(&g, 1, |_| vec![0.3, -1.2]).unwrap();
        let op = Homotopy::unit(2);
        assert!(op.chain_residual(&w).unwrap() < 1e-8);
        let zero = FormField::zeros(&g, 1).unwrap();
        assert_eq!(op.chain_residual(&zero).unwrap(), 0.0);
    }

    #[test]
    fn chain_homotopy_on_area_form() {
        // dω = 0 for the top form, so d𝒯ω must reproduce ω.
        let g = Grid::cube(2, 33, 1.0).unwrap();
        let w = FormField::basis(&g, 0b11).unwrap();
        let op = Homotopy::unit(2);
        let nodes = nodes_within(&g, &[0.0; 3], 0.6);
        let t = op.apply(&w, &nodes).unwrap().form;
        let dt = t.exterior_derivative().unwrap();
        for i in nodes_within(&g, &[0.0; 3], 0.5) {
            assert!((dt.components()[0][i] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn exactness_for_identity() {
        let g = Grid::cube(3, 17, 1.0).unwrap();
        let rho = Frame::standard(&g);
        let op = Homotopy::unit(3);
        let nodes = nodes_within(&g, &[0.0; 3], 0.25);
        let f = op.potential_map(&rho, &nodes).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in 0..3 {
            for &i in &nodes {
                let c = f[a][i] - g.point(i)[a];
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        assert!(hi - lo < 1e-6);
    }

    #[test]
    fn pointwise_matches_grid_evaluation() {
        let g = Grid::cube(2, 21, 1.0).unwrap();
        let w = FormField::from_fn(&g, 1, |p| vec![p[1] * p[1], p[0] * p[1]]).unwrap();
        let op = Homotopy::new(2, HomotopyConfig::default(), 0.8, [0.1, 0.0, 0.0]).unwrap();
        let all = op.apply_all(&w).unwrap().form;
        let interp = w.interpolator();
        for i in [0, 37, 220, g.len() - 1] {
            let v = op.at(&interp, 1, &g.point(i)).unwrap();
            assert_eq!(v[0], all.components()[0][i]);
        }
    }
}
