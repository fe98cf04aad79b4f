//! The q-energy `∫|dρ|₂^q`, the (QC) penalty and their gradients with
//! respect to the nodal frame entries.
//!
//! Frames are flattened as `x[(i·n + a)·N + node] = ρ_i` component `a`,
//! i.e. entry `(i, a)` of the frame matrix at `node`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::form::FormField;
use crate::frame::{hs_norm, Frame};
use crate::grid::{Annulus, Grid, Region};
use crate::linalg::{self, Mat};

/// `∫_region |dρ|₂^q`.
pub fn energy(frame: &Frame, q: f64, region: &Region) -> Result<f64> {
    let d = frame.exterior_derivative()?;
    let quad = frame.grid().quadrature(region)?;
    let mag = hs_norm(&d);
    Ok(quad.integrate_with(|i| mag[i].powf(q)))
}

/// `∫_region max{|ρ|ⁿ − K J_ρ, 0}²`.
pub fn qc_violation(frame: &Frame, k: f64, region: &Region) -> Result<f64> {
    let n = frame.dim() as i32;
    let quad = frame.grid().quadrature(region)?;
    let norm = frame.operator_norm();
    let jac = frame.jacobian();
    Ok(quad.integrate_with(|i| (norm[i].powi(n) - k * jac[i]).max(0.0).powi(2)))
}

pub fn flatten(frame: &Frame) -> Vec<f64> {
    frame
        .members()
        .iter()
        .flat_map(|m| m.components().iter().flatten().copied())
        .collect()
}

pub fn unflatten(grid: &Grid, x: &[f64]) -> Result<Frame> {
    let n = grid.dim();
    let len = grid.len();
    if x.len() != n * n * len {
        return Err(Error::invalid("frame", "flat vector has the wrong length"));
    }
    let members = (0..n)
        .map(|i| {
            let comps = (0..n)
                .map(|a| x[(i * n + a) * len..(i * n + a + 1) * len].to_vec())
                .collect();
            FormField::from_components(grid, 1, comps)
        })
        .collect::<Result<Vec<_>>>()?;
    Frame::new(members)
}

/// Parts of `F_μ = E + μ P` at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Value {
    /// Energy as optimized (smoothed when `q < 2`).
    pub energy: f64,
    pub violation: f64,
    pub objective: f64,
}

/// Penalized objective on an annulus with fixed data on `B(r)` and outside
/// `B(R)`.
#[derive(Debug, Clone)]
pub struct Objective {
    grid: Grid,
    n: usize,
    len: usize,
    pub q: f64,
    pub k: f64,
    /// Smoothing `ε` of `|dρ|₂` (zero for `q ≥ 2`).
    pub eps: f64,
    /// Quadrature nodes of `A(r, R)` with weight × cell volume.
    quad: Vec<(usize, f64)>,
    free: Vec<bool>,
    inv2h: f64,
    /// `(a, b, stride_a, stride_b)` for every pair `a < b`.
    pairs: Vec<(usize, usize, usize, usize)>,
}

/// Convex quadratic model of `F_μ` around the last evaluation point: the
/// energy's Gauss–Newton part plus the penalty Hessian projected onto the
/// positive semidefinite cone node by node.
#[derive(Debug, Clone, Default)]
pub struct QuadraticModel {
    mu: f64,
    /// Energy curvature per curl entry at each quadrature node.
    curl_weight: Vec<f64>,
    /// Active penalty nodes with their projected `2w(∇gap ∇gapᵀ + gap ∇²gap)`.
    active: Vec<(usize, Box<[[f64; 9]; 9]>)>,
}

#[derive(Clone, Copy)]
struct NodeValue {
    energy: f64,
    energy_exact: f64,
    violation: f64,
}

impl Objective {
    pub fn new(grid: &Grid, q: f64, k: f64, annulus: Annulus, eps: f64) -> Result<Self> {
        let n = grid.dim();
        if !(q > n as f64 / 2.0) || !q.is_finite() {
            return Err(Error::invalid(
                "q",
                format!("need q > n/2 = {}, got {q}", n as f64 / 2.0),
            ));
        }
        if !(k >= 1.0) {
            return Err(Error::invalid("k", format!("need K ≥ 1, got {k}")));
        }
        let quadrature = grid.quadrature(&Region::Annulus(annulus))?;
        let cv = quadrature.cell_volume;
        let dims = grid.dims();
        for &i in &quadrature.nodes {
            let c = grid.coords(i);
            if (0..n).any(|a| c[a] == 0 || c[a] + 1 == dims[a]) {
                return Err(Error::SupportNotCovered(format!(
                    "annulus A({}, {}) reaches the grid boundary",
                    annulus.inner, annulus.outer
                )));
            }
        }
        let quad = quadrature
            .nodes
            .iter()
            .zip(&quadrature.weights)
            .map(|(&i, &w)| (i, w * cv))
            .collect();
        let free = (0..grid.len()).map(|i| annulus.contains(&grid.point(i))).collect();
        let st = grid.strides();
        let pairs = if n == 2 {
            vec![(0, 1, st[0], st[1])]
        } else {
            vec![(0, 1, st[0], st[1]), (0, 2, st[0], st[2]), (1, 2, st[1], st[2])]
        };
        Ok(Objective {
            grid: grid.clone(),
            n,
            len: grid.len(),
            q,
            k,
            eps: if q < 2.0 { eps } else { 0.0 },
            quad,
            free,
            inv2h: 0.5 / grid.spacing(),
            pairs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_free(&self, node: usize) -> bool {
        self.free[node]
    }

    pub fn free_nodes(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    /// Flat indices of all free entries.
    pub fn free_indices(&self) -> Vec<usize> {
        let len = self.len;
        (0..self.n * self.n)
            .flat_map(|c| (0..len).filter(|&v| self.free[v]).map(move |v| c * len + v))
            .collect()
    }

    /// Curl entries `∂_a x_{i,b} − ∂_b x_{i,a}` at an interior node.
    #[inline]
    fn curl(&self, x: &[f64], node: usize, out: &mut [f64; 9]) -> f64 {
        let (n, len) = (self.n, self.len);
        let np = self.pairs.len();
        let mut s = 0.0;
        for i in 0..n {
            for (p, &(a, b, sa, sb)) in self.pairs.iter().enumerate() {
                let fb = (i * n + b) * len + node;
                let fa = (i * n + a) * len + node;
                let c = (x[fb + sa] - x[fb - sa] - x[fa + sb] + x[fa - sb]) * self.inv2h;
                out[i * np + p] = c;
                s += c * c;
            }
        }
        s / n as f64
    }

    /// Adjoint of [`Objective::curl`]: adds `Σ g_{i,ab} ∂c_{i,ab}/∂x` into `out`.
    #[inline]
    fn curl_adjoint(&self, g: &[f64; 9], node: usize, out: &mut [f64]) {
        let (n, len) = (self.n, self.len);
        let np = self.pairs.len();
        for i in 0..n {
            for (p, &(a, b, sa, sb)) in self.pairs.iter().enumerate() {
                let v = g[i * np + p] * self.inv2h;
                let fb = (i * n + b) * len + node;
                let fa = (i * n + a) * len + node;
                out[fb + sa] += v;
                out[fb - sa] -= v;
                out[fa + sb] -= v;
                out[fa - sb] += v;
            }
        }
    }

    #[inline]
    fn matrix(&self, x: &[f64], node: usize) -> Mat {
        matrix_at(x, self.n, self.len, node)
    }

    fn node_value(&self, x: &[f64], node: usize, w: f64) -> NodeValue {
        let mut curl = [0.0; 9];
        let s = self.curl(x, node, &mut curl);
        let m = self.matrix(x, node);
        let n = self.n;
        let gap = linalg::spectral_norm(n, &m).powi(n as i32) - self.k * linalg::det(n, &m);
        NodeValue {
            energy: w * (s + self.eps * self.eps).powf(0.5 * self.q),
            energy_exact: w * s.powf(0.5 * self.q),
            violation: if gap > 0.0 { w * gap * gap } else { 0.0 },
        }
    }

    fn sum_values(&self, x: &[f64]) -> NodeValue {
        self.quad
            .par_iter()
            .with_min_len(4096)
            .map(|&(node, w)| self.node_value(x, node, w))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(
                NodeValue {
                    energy: 0.0,
                    energy_exact: 0.0,
                    violation: 0.0,
                },
                |a, b| NodeValue {
                    energy: a.energy + b.energy,
                    energy_exact: a.energy_exact + b.energy_exact,
                    violation: a.violation + b.violation,
                },
            )
    }

    /// Unsmoothed energy on the annulus.
    pub fn exact_energy(&self, x: &[f64]) -> f64 {
        self.sum_values(x).energy_exact
    }

    pub fn value(&self, x: &[f64], mu: f64) -> Value {
        let v = self.sum_values(x);
        Value {
            energy: v.energy,
            violation: v.violation,
            objective: v.energy + mu * v.violation,
        }
    }

    /// `F_μ` and its gradient; entries of fixed nodes get zero gradient.
    pub fn value_and_gradient(&self, x: &[f64], mu: f64, grad: &mut [f64]) -> Value {
        self.evaluate(x, mu, grad, None)
    }

    /// As [`Objective::value_and_gradient`], also returning the Gauss–Newton
    /// model at `x`.
    pub fn value_gradient_model(&self, x: &[f64], mu: f64, grad: &mut [f64]) -> (Value, QuadraticModel) {
        let mut model = QuadraticModel {
            mu,
            curl_weight: Vec::with_capacity(self.quad.len()),
            active: Vec::new(),
        };
        let v = self.evaluate(x, mu, grad, Some(&mut model));
        (v, model)
    }

    fn evaluate(&self, x: &[f64], mu: f64, grad: &mut [f64], mut model: Option<&mut QuadraticModel>) -> Value {
        let n = self.n;
        let len = self.len;
        let q = self.q;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut energy = 0.0;
        let mut violation = 0.0;
        let mut curl = [0.0; 9];
        for &(node, w) in &self.quad {
            let s = self.curl(x, node, &mut curl);
            let smoothed = s + self.eps * self.eps;
            energy += w * smoothed.powf(0.5 * q);
            let f = if smoothed > 0.0 {
                w * q * smoothed.powf(0.5 * q - 1.0) / n as f64
            } else {
                0.0
            };
            if f != 0.0 {
                let mut g = curl;
                g.iter_mut().for_each(|v| *v *= f);
                self.curl_adjoint(&g, node, grad);
            }
            let m = self.matrix(x, node);
            let (sigma, u, v) = linalg::spectral_norm_with_vectors(n, &m);
            let gap = sigma.powi(n as i32) - self.k * linalg::det(n, &m);
            if let Some(model) = model.as_deref_mut() {
                model.curl_weight.push(f);
            }
            if gap > 0.0 {
                let cof = linalg::cofactor(n, &m);
                let ds = n as f64 * sigma.powi(n as i32 - 1);
                let mut dg = [0.0; 9];
                for i in 0..n {
                    for a in 0..n {
                        dg[i * n + a] = ds * u[i] * v[a] - self.k * cof[i][a];
                    }
                }
                violation += w * gap * gap;
                for c in 0..n * n {
                    grad[c * len + node] += mu * 2.0 * w * gap * dg[c];
                }
                if let Some(model) = model.as_deref_mut() {
                    let nn = n * n;
                    let hs = linalg::spectral_norm_hessian(n, &m);
                    let hd = linalg::det_hessian(n, &m);
                    let (nf, ni) = (n as f64, n as i32);
                    let c1 = nf * sigma.powi(ni - 1);
                    let c2 = nf * (nf - 1.0) * sigma.powi(ni - 2);
                    let mut h = Box::new([[0.0; 9]; 9]);
                    for p in 0..nn {
                        let sp = u[p / n] * v[p % n];
                        for r in 0..nn {
                            let sr = u[r / n] * v[r % n];
                            let hg = c1 * hs[p][r] + c2 * sp * sr - self.k * hd[p][r];
                            h[p][r] = 2.0 * w * (dg[p] * dg[r] + gap * hg);
                        }
                    }
                    linalg::clamp_psd(nn, &mut h);
                    model.active.push((node, h));
                }
            }
        }
        self.mask_fixed(grad);
        Value {
            energy,
            violation,
            objective: energy + mu * violation,
        }
    }

    /// Zeroes entries at fixed nodes.
    pub fn mask_fixed(&self, v: &mut [f64]) {
        for c in 0..self.n * self.n {
            for (g, &free) in v[c * self.len..(c + 1) * self.len].iter_mut().zip(&self.free) {
                if !free {
                    *g = 0.0;
                }
            }
        }
    }

    /// `out = H v` for the quadratic model, restricted to free entries.
    pub fn apply_model(&self, model: &QuadraticModel, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let len = self.len;
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut curl = [0.0; 9];
        for (&(node, _), &f) in self.quad.iter().zip(&model.curl_weight) {
            if f == 0.0 {
                continue;
            }
            self.curl(v, node, &mut curl);
            curl.iter_mut().for_each(|c| *c *= f);
            self.curl_adjoint(&curl, node, out);
        }
        for (node, h) in &model.active {
            for p in 0..n * n {
                let mut acc = 0.0;
                for r in 0..n * n {
                    acc += h[p][r] * v[r * len + node];
                }
                out[p * len + node] += model.mu * acc;
            }
        }
        self.mask_fixed(out);
    }

    /// Diagonal of the quadratic model (one at fixed entries).
    pub fn model_diagonal(&self, model: &QuadraticModel) -> Vec<f64> {
        let n = self.n;
        let len = self.len;
        let mut d = vec![0.0; n * n * len];
        let c2 = self.inv2h * self.inv2h;
        for (&(node, _), &f) in self.quad.iter().zip(&model.curl_weight) {
            for i in 0..n {
                for &(a, b, sa, sb) in &self.pairs {
                    let fb = (i * n + b) * len + node;
                    let fa = (i * n + a) * len + node;
                    d[fb + sa] += f * c2;
                    d[fb - sa] += f * c2;
                    d[fa + sb] += f * c2;
                    d[fa - sb] += f * c2;
                }
            }
        }
        for (node, h) in &model.active {
            for c in 0..n * n {
                d[c * len + node] += model.mu * h[c][c];
            }
        }
        for c in 0..n * n {
            for (v, &free) in d[c * len..(c + 1) * len].iter_mut().zip(&self.free) {
                if !free {
                    *v = 1.0;
                }
            }
        }
        d
    }
}

/// Normalized Hilbert–Schmidt magnitude of `dρ` for a flat frame, averaged in
/// the `L²` sense over the annulus; sets the `q < 2` smoothing scale.
pub fn curl_rms(frame: &Frame, annulus: Annulus) -> Result<f64> {
    let d = frame.exterior_derivative()?;
    let quad = frame.grid().quadrature(&Region::Annulus(annulus))?;
    Ok(quad.average(&hs_norm(&d), 2.0))
}

/// Matrix of the frame at a node in a flat vector.
pub fn matrix_at(x: &[f64], n: usize, len: usize, node: usize) -> Mat {
    let mut m = linalg::ZERO;
    for i in 0..n {
        for a in 0..n {
            m[i][a] = x[(i * n + a) * len + node];
        }
    }
    m
}
