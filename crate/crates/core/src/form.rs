//! Grid-sampled differential forms.
//!
//! An ℓ-form on an n-dimensional grid stores one nodal array per increasing
//! multi-index `I = (i₁ < … < i_ℓ)`, ordered lexicographically. Multi-indices
//! are represented as bitmasks over the axes.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::linalg::Mat;

/// Bitmask of axes in a multi-index.
pub type MultiIndex = u8;

/// Increasing multi-indices of length `degree` in lexicographic order.
pub fn multi_indices(n: usize, degree: usize) -> Vec<MultiIndex> {
    (0..n)
        .combinations(degree)
        .map(|c| c.iter().fold(0u8, |m, &a| m | (1 << a)))
        .collect()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

pub fn axes_of(mask: MultiIndex) -> Vec<usize> {
    (0..8).filter(|a| mask & (1 << a) != 0).collect()
}

/// Sign of `dx_I ∧ dx_J` relative to `dx_{I∪J}` (zero if the sets overlap).
pub fn wedge_sign(a: MultiIndex, b: MultiIndex) -> f64 {
    if a & b != 0 {
        return 0.0;
    }
    let mut inversions = 0;
    for i in axes_of(a) {
        for j in axes_of(b) {
            if i > j {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Position of multi-index `mask` in the lexicographic component order.
pub fn component_of(n: usize, mask: MultiIndex) -> usize {
    let degree = mask.count_ones() as usize;
    multi_indices(n, degree)
        .iter()
        .position(|&m| m == mask)
        .expect("mask within dimension")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormField {
    grid: Grid,
    degree: usize,
    comps: Vec<Vec<f64>>,
}

impl FormField {
    pub fn zeros(grid: &Grid, degree: usize) -> Result<Self> {
        let n = grid.dim();
        if degree > n {
            return Err(Error::Degree(format!("degree {degree} exceeds dimension {n}")));
        }
        Ok(FormField {
            grid: grid.clone(),
            degree,
            comps: vec![vec![0.0; grid.len()]; binomial(n, degree)],
        })
    }

    pub fn from_components(grid: &Grid, degree: usize, comps: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.dim();
        if degree > n {
            return Err(Error::Degree(format!("degree {degree} exceeds dimension {n}")));
        }
        if comps.len() != binomial(n, degree) {
            return Err(Error::Degree(format!(
                "expected {} components for a {degree}-form in dimension {n}, got {}",
                binomial(n, degree),
                comps.len()
            )));
        }
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch);
        }
        Ok(FormField {
            grid: grid.clone(),
            degree,
            comps,
        })
    }

    /// Samples `f(x) -> coefficients` at every node.
    pub fn from_fn(grid: &Grid, degree: usize, f: impl Fn(&Point) -> Vec<f64>) -> Result<Self> {
        let mut out = FormField::zeros(grid, degree)?;
        for idx in 0..grid.len() {
            let v = f(&grid.point(idx));
            for (c, val) in out.comps.iter_mut().zip(v) {
                c[idx] = val;
            }
        }
        Ok(out)
    }

    pub fn scalar(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        FormField::from_components(grid, 0, vec![values])
    }

    /// Constant-coefficient basis form `dx_I`.
    pub fn basis(grid: &Grid, mask: MultiIndex) -> Result<Self> {
        let degree = mask.count_ones() as usize;
        let mut out = FormField::zeros(grid, degree)?;
        let c = component_of(grid.dim(), mask);
        out.comps[c].iter_mut().for_each(|v| *v = 1.0);
        Ok(out)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.comps
    }

    pub fn component(&self, mask: MultiIndex) -> &[f64] {
        &self.comps[component_of(self.dim(), mask)]
    }

    pub fn masks(&self) -> Vec<MultiIndex> {
        multi_indices(self.dim(), self.degree)
    }

    pub fn at(&self, idx: usize) -> Vec<f64> {
        self.comps.iter().map(|c| c[idx]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    fn check_compatible(&self, other: &FormField) -> Result<()> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> FormField {
        let mut out = self.clone();
        out.comps.iter_mut().flatten().for_each(|v| *v *= c);
        out
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &FormField, b: f64) -> Result<FormField> {
        self.check_compatible(other)?;
        if self.degree != other.degree {
            return Err(Error::Degree(format!(
                "cannot add a {}-form and a {}-form",
                self.degree, other.degree
            )));
        }
        let mut out = self.clone();
        for (o, c) in out.comps.iter_mut().zip(&other.comps) {
            for (x, y) in o.iter_mut().zip(c) {
                *x = a * *x + b * y;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &FormField) -> Result<FormField> {
        self.combine(1.0, other, -1.0)
    }

    /// Pointwise multiplication by a scalar field.
    pub fn mul_scalar_field(&self, s: &[f64]) -> FormField {
        let mut out = self.clone();
        for c in &mut out.comps {
            for (v, f) in c.iter_mut().zip(s) {
                *v *= f;
            }
        }
        out
    }

    /// Euclidean norm of the coefficient vector at every node.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norm().into_iter().fold(0.0, f64::max)
    }

    /// Exterior derivative with second-order central differences in the
    /// interior and second-order one-sided stencils on the boundary.
    pub fn exterior_derivative(&self) -> Result<FormField> {
        let n = self.dim();
        if self.degree >= n {
            return Err(Error::Degree(format!(
                "no exterior derivative of a {}-form in dimension {n}",
                self.degree
            )));
        }
        let mut out = FormField::zeros(&self.grid, self.degree + 1)?;
        let in_masks = self.masks();
        let out_masks = out.masks();
        for (ci, &mask) in in_masks.iter().enumerate() {
            for axis in 0..n {
                if mask & (1 << axis) != 0 {
                    continue;
                }
                let target = mask | (1 << axis);
                let sign = wedge_sign(1 << axis, mask);
                let co = out_masks.iter().position(|&m| m == target).unwrap();
                let deriv = partial(&self.grid, &self.comps[ci], axis);
                for (o, d) in out.comps[co].iter_mut().zip(deriv) {
                    *o += sign * d;
                }
            }
        }
        Ok(out)
    }

    /// Pointwise exterior product.
    pub fn wedge(&self, other: &FormField) -> Result<FormField> {
        self.check_compatible(other)?;
        let n = self.dim();
        let degree = self.degree + other.degree;
        if degree > n {
            return Err(Error::Degree(format!(
                "wedge of degrees {} and {} exceeds dimension {n}",
                self.degree, other.degree
            )));
        }
        let mut out = FormField::zeros(&self.grid, degree)?;
        let out_masks = out.masks();
        for (ca, &ma) in self.masks().iter().enumerate() {
            for (cb, &mb) in other.masks().iter().enumerate() {
                let sign = wedge_sign(ma, mb);
                if sign == 0.0 {
                    continue;
                }
                let co = out_masks.iter().position(|&m| m == ma | mb).unwrap();
                for i in 0..self.grid.len() {
                    out.comps[co][i] += sign * self.comps[ca][i] * other.comps[cb][i];
                }
            }
        }
        Ok(out)
    }

    /// Euclidean Hodge star with the standard orientation:
    /// `⋆dx_I = sign(I, Iᶜ) dx_{Iᶜ}`.
    pub fn hodge_star(&self) -> FormField {
        let n = self.dim();
        let full: MultiIndex = (1 << n) - 1;
        let mut out = FormField::zeros(&self.grid, n - self.degree).expect("valid degree");
        let out_masks = out.masks();
        for (ci, &mask) in self.masks().iter().enumerate() {
            let comp = full & !mask;
            let sign = wedge_sign(mask, comp);
            let co = out_masks.iter().position(|&m| m == comp).unwrap();
            out.comps[co] = self.comps[ci].iter().map(|v| sign * v).collect();
        }
        out
    }

    /// Node-major copy of the coefficients for fast off-grid evaluation.
    pub fn interpolator(&self) -> Interpolator {
        Interpolator::new(&self.grid, &self.comps)
    }
}

/// Partial derivative of a nodal array along `axis`.
pub fn partial(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    partial_into(grid, f, axis, &mut out);
    out
}

pub fn partial_into(grid: &Grid, f: &[f64], axis: usize, out: &mut [f64]) {
    let stride = grid.strides()[axis];
    let d = grid.dims()[axis];
    let inv = 0.5 / grid.spacing();
    for (idx, o) in out.iter_mut().enumerate() {
        *o = partial_at(f, idx, grid.coords(idx)[axis], d, stride, inv);
    }
}

/// Stencil value at one node; `i` is the node's coordinate along the axis.
#[inline]
pub fn partial_at(f: &[f64], idx: usize, i: usize, d: usize, stride: usize, inv2h: f64) -> f64 {
    if i == 0 {
        (-3.0 * f[idx] + 4.0 * f[idx + stride] - f[idx + 2 * stride]) * inv2h
    } else if i == d - 1 {
        (3.0 * f[idx] - 4.0 * f[idx - stride] + f[idx - 2 * stride]) * inv2h
    } else {
        (f[idx + stride] - f[idx - stride]) * inv2h
    }
}

/// Adds `g · ∂(stencil at idx)/∂f` into `out`, the transpose of [`partial_at`].
#[inline]
pub fn partial_adjoint_at(g: f64, out: &mut [f64], idx: usize, i: usize, d: usize, stride: usize, inv2h: f64) {
    let g = g * inv2h;
    if i == 0 {
        out[idx] -= 3.0 * g;
        out[idx + stride] += 4.0 * g;
        out[idx + 2 * stride] -= g;
    } else if i == d - 1 {
        out[idx] += 3.0 * g;
        out[idx - stride] -= 4.0 * g;
        out[idx - 2 * stride] += g;
    } else {
        out[idx + stride] += g;
        out[idx - stride] -= g;
    }
}

/// Multilinear interpolation of several nodal arrays sharing one grid,
/// stored node-major. Points outside the box are clamped to it.
#[derive(Debug, Clone)]
pub struct Interpolator {
    grid: Grid,
    ncomp: usize,
    data: Vec<f64>,
    n: usize,
    origin: Point,
    inv_h: f64,
    top: [f64; 3],
    last_cell: [usize; 3],
    strides: [usize; 3],
    corners: [usize; 8],
}

impl Interpolator {
    pub fn new(grid: &Grid, comps: &[Vec<f64>]) -> Self {
        let ncomp = comps.len();
        let mut data = vec![0.0; grid.len() * ncomp];
        for (c, arr) in comps.iter().enumerate() {
            for (i, v) in arr.iter().enumerate() {
                data[i * ncomp + c] = *v;
            }
        }
        let n = grid.dim();
        let strides = grid.strides();
        let mut top = [0.0; 3];
        let mut last_cell = [0; 3];
        let mut origin = [0.0; 3];
        for a in 0..n {
            top[a] = (grid.dims()[a] - 1) as f64;
            last_cell[a] = grid.dims()[a] - 2;
            origin[a] = grid.origin()[a];
        }
        let mut corners = [0; 8];
        for (corner, c) in corners.iter_mut().enumerate().take(1 << n) {
            *c = (0..n)
                .filter(|a| corner & (1 << a) != 0)
                .map(|a| strides[a] * ncomp)
                .sum();
        }
        Interpolator {
            grid: grid.clone(),
            ncomp,
            data,
            n,
            origin,
            inv_h: 1.0 / grid.spacing(),
            top,
            last_cell,
            strides,
            corners,
        }
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Writes the interpolated components into `out`; returns true when the
    /// point had to be clamped into the grid box.
    #[inline]
    pub fn eval_into(&self, p: &Point, out: &mut [f64]) -> bool {
        let n = self.n;
        let mut base = 0usize;
        let mut frac = [0.0f64; 3];
        let mut clipped = false;
        for a in 0..n {
            let mut s = (p[a] - self.origin[a]) * self.inv_h;
            let top = self.top[a];
            if !(s >= 0.0) {
                if s < -1e-9 || s.is_nan() {
                    clipped = true;
                }
                s = 0.0;
            } else if s > top {
                if s > top + 1e-9 {
                    clipped = true;
                }
                s = top;
            }
            let i = (s as usize).min(self.last_cell[a]);
            frac[a] = s - i as f64;
            base += i * self.strides[a];
        }
        let nc = self.ncomp;
        let mut w = [0.0f64; 8];
        if n == 3 {
            let (fx, fy, fz) = (frac[0], frac[1], frac[2]);
            let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
            w = [
                gx * gy * gz,
                fx * gy * gz,
                gx * fy * gz,
                fx * fy * gz,
                gx * gy * fz,
                fx * gy * fz,
                gx * fy * fz,
                fx * fy * fz,
            ];
        } else {
            let (fx, fy) = (frac[0], frac[1]);
            let (gx, gy) = (1.0 - fx, 1.0 - fy);
            w[..4].copy_from_slice(&[gx * gy, fx * gy, gx * fy, fx * fy]);
        }
        let out = &mut out[..nc];
        out.iter_mut().for_each(|v| *v = 0.0);
        let base = base * nc;
        for (wc, &off) in w.iter().zip(&self.corners).take(1 << n) {
            let row = &self.data[base + off..base + off + nc];
            for (o, v) in out.iter_mut().zip(row) {
                *o += wc * v;
            }
        }
        clipped
    }

    pub fn eval(&self, p: &Point) -> (Vec<f64>, bool) {
        let mut out = vec![0.0; self.ncomp];
        let clipped = self.eval_into(p, &mut out);
        (out, clipped)
    }
}

/// Coefficients of the pull-back `F*ω` at a point, given the coefficients of
/// ω at `F(x)` and the Jacobian matrix `DF(x)` (rows = output components).
///
/// `(F*ω)_J = Σ_I ω_I · det(DF[I, J])`.
pub fn pullback_coefficients(n: usize, degree: usize, coeffs: &[f64], jac: &Mat) -> Vec<f64> {
    let masks = multi_indices(n, degree);
    masks
        .iter()
        .map(|&mj| {
            let cols = axes_of(mj);
            masks
                .iter()
                .zip(coeffs)
                .map(|(&mi, &w)| {
                    let rows = axes_of(mi);
                    w * minor(jac, &rows, &cols)
                })
                .sum()
        })
        .collect()
}

fn minor(m: &Mat, rows: &[usize], cols: &[usize]) -> f64 {
    match rows.len() {
        0 => 1.0,
        1 => m[rows[0]][cols[0]],
        2 => m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]],
        3 => {
            let mut sub = [[0.0; 3]; 3];
            for (a, &r) in rows.iter().enumerate() {
                for (b, &c) in cols.iter().enumerate() {
                    sub[a][b] = m[r][c];
                }
            }
            crate::linalg::det(3, &sub)
        }
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> Grid {
        Grid::cube(2, 21, 1.0).unwrap()
    }

    fn grid3() -> Grid {
        Grid::cube(3, 13, 1.0).unwrap()
    }

    #[test]
    fn multi_index_order_is_lexicographic() {
        assert_eq!(multi_indices(3, 2), vec![0b011, 0b101, 0b110]);
        assert_eq!(multi_indices(2, 1), vec![0b01, 0b10]);
        assert_eq!(multi_indices(3, 0), vec![0]);
        assert_eq!(binomial(3, 2), 3);
    }

    #[test]
    fn derivative_of_constant_form_is_zero() {
        let g = grid3();
        let w = FormField::basis(&g, 0b001).unwrap();
        assert_eq!(w.exterior_derivative().unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn derivative_of_x2_dx1() {
        let g = grid2();
        let w = FormField::from_fn(&g, 1, |p| vec![p[1], 0.0]).unwrap();
        let dw = w.exterior_derivative().unwrap();
        assert!(dw.components()[0].iter().all(|v| (v + 1.0).abs() < 1e-12));
    }

    #[test]
    fn derivative_of_quadratic_form_is_second_order() {
        // ω = x₁x₂ dx₁ + x₁² dx₂ ⇒ dω = (2x₁ − x₁) dx₁∧dx₂ = x₁ dx₁∧dx₂
        let err = |res: usize| {
            let g = Grid::cube(2, res, 1.0).unwrap();
            let w = FormField::from_fn(&g, 1, |p| vec![p[0] * p[1], p[0] * p[0]]).unwrap();
            let dw = w.exterior_derivative().unwrap();
            (0..g.len())
                .map(|i| (dw.components()[0][i] - g.point(i)[0]).abs())
                .fold(0.0, f64::max)
        };
        // Quadratic coefficients are differentiated exactly by these stencils.
        assert!(err(11) < 1e-12);
        let cubic_err = |res: usize| {
            let g = Grid::cube(2, res, 1.0).unwrap();
            let w = FormField::from_fn(&g, 1, |p| vec![0.0, p[0].powi(3)]).unwrap();
            let dw = w.exterior_derivative().unwrap();
            (0..g.len())
                .map(|i| (dw.components()[0][i] - 3.0 * g.point(i)[0].powi(2)).abs())
                .fold(0.0, f64::max)
        };
        let ratio = cubic_err(17) / cubic_err(33);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn d_of_d_vanishes_on_functions() {
        let g = grid3();
        let f = FormField::from_fn(&g, 0, |p| vec![p[0].powi(3) * p[1] - p[2] * p[1].powi(2)]).unwrap();
        let ddf = f.exterior_derivative().unwrap().exterior_derivative().unwrap();
        // Tensor-product stencils commute, so the discrete d∘d is exact on 0-forms.
        assert!(ddf.sup_norm() < 1e-10);
    }

    #[test]
    fn degree_n_has_no_derivative() {
        let g = grid2();
        let w = FormField::basis(&g, 0b11).unwrap();
        assert!(w.exterior_derivative().is_err());
    }

    #[test]
    fn wedge_basics() {
        let g = grid2();
        let dx1 = FormField::basis(&g, 0b01).unwrap();
        let dx2 = FormField::basis(&g, 0b10).unwrap();
        let v = dx1.wedge(&dx2).unwrap();
        assert!(v.components()[0].iter().all(|&x| x == 1.0));
        let w = dx2.wedge(&dx1).unwrap();
        assert!(w.components()[0].iter().all(|&x| x == -1.0));
        let a = FormField::from_fn(&g, 1, |p| vec![p[0], p[1]]).unwrap();
        assert_eq!(a.wedge(&a).unwrap().sup_norm(), 0.0);
        let top = dx1.wedge(&dx2).unwrap();
        assert!(top.wedge(&dx1).is_err());
    }

    #[test]
    fn wedge_of_x1dx1_and_x2dx2() {
        let g = grid2();
        let a = FormField::from_fn(&g, 1, |p| vec![p[0], 0.0]).unwrap();
        let b = FormField::from_fn(&g, 1, |p| vec![0.0, p[1]]).unwrap();
        let c = a.wedge(&b).unwrap();
        for i in 0..g.len() {
            let p = g.point(i);
            assert_eq!(c.components()[0][i], p[0] * p[1]);
        }
    }

    #[test]
    fn hodge_star_basis_cases() {
        let g = grid3();
        let vol = FormField::basis(&g, 0b111).unwrap();
        assert!(vol.hodge_star().components()[0].iter().all(|&v| v == 1.0));
        let dx1 = FormField::basis(&g, 0b001).unwrap();
        let s = dx1.hodge_star();
        assert_eq!(s.degree(), 2);
        assert!(s.component(0b110).iter().all(|&v| v == 1.0));
        assert!(s.component(0b011).iter().all(|&v| v == 0.0));
        let dx2 = FormField::basis(&g, 0b010).unwrap();
        assert!(dx2.hodge_star().component(0b101).iter().all(|&v| v == -1.0));
    }

    #[test]
    fn hodge_involution_sign_on_every_basis_form() {
        for n in [2usize, 3] {
            let g = Grid::cube(n, 8, 1.0).unwrap();
            for l in 0..=n {
                for mask in multi_indices(n, l) {
                    let w = FormField::basis(&g, mask).unwrap();
                    let ss = w.hodge_star().hodge_star();
                    let sign = if (l * (n - l)) % 2 == 0 { 1.0 } else { -1.0 };
                    assert_eq!(ss, w.scaled(sign), "n={n} l={l} mask={mask:b}");
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_linear_functions() {
        let g = grid3();
        let f = FormField::from_fn(&g, 0, |p| vec![1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2]]).unwrap();
        let it = f.interpolator();
        let p = [0.123, -0.456, 0.789];
        let (v, clipped) = it.eval(&p);
        assert!(!clipped);
        assert!((v[0] - (1.0 + 0.246 + 0.456 + 0.3945)).abs() < 1e-12);
        let (_, clipped) = it.eval(&[1.5, 0.0, 0.0]);
        assert!(clipped);
    }

    #[test]
    fn pullback_of_dx1_under_doubling() {
        let jac = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]];
        assert_eq!(pullback_coefficients(3, 1, &[1.0, 0.0, 0.0], &jac), vec![2.0, 0.0, 0.0]);
        assert_eq!(pullback_coefficients(3, 3, &[1.0], &jac), vec![8.0]);
    }
}
