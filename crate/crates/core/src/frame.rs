//! Frames: n-tuples of 1-forms, identified with matrix fields whose row `i`
//! holds the coefficients of `ρ_i`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::FormField;
use crate::grid::{Grid, Point, Region};
use crate::linalg::{self, Mat};

/// Relative Jacobian floor: `δ_J = JACOBIAN_FLOOR · median |ρ|ⁿ`.
pub const JACOBIAN_FLOOR: f64 = 1e-10;
/// Absolute floor below which a frame counts as zero.
pub const NORM_FLOOR: f64 = 1e-10;
/// Relative slack on `K` in the quasiconformality predicate.
pub const QC_SLACK: f64 = 1e-6;
/// Fraction of region nodes allowed to exceed `K(1 + QC_SLACK)`.
pub const QC_EXCEPTION_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    members: Vec<FormField>,
}

impl Frame {
    pub fn new(members: Vec<FormField>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::invalid("frame", "no members"))?;
        let n = first.dim();
        if members.len() != n {
            return Err(Error::invalid(
                "frame",
                format!("expected {n} members, got {}", members.len()),
            ));
        }
        for m in &members {
            if m.degree() != 1 {
                return Err(Error::Degree(format!(
                    "frame members must be 1-forms, got degree {}",
                    m.degree()
                )));
            }
            if !m.grid().same_shape(first.grid()) {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Frame { members })
    }

    /// Frame whose matrix at each node is `f(x)`.
    pub fn from_matrix_fn(grid: &Grid, f: impl Fn(&Point) -> Mat) -> Self {
        let n = grid.dim();
        let mut comps = vec![vec![vec![0.0; grid.len()]; n]; n];
        for idx in 0..grid.len() {
            let m = f(&grid.point(idx));
            for i in 0..n {
                for j in 0..n {
                    comps[i][j][idx] = m[i][j];
                }
            }
        }
        let members = comps
            .into_iter()
            .map(|c| FormField::from_components(grid, 1, c).expect("shape"))
            .collect();
        Frame { members }
    }

    /// The standard frame `dx = (dx₁, …, dxₙ)`.
    pub fn standard(grid: &Grid) -> Self {
        let id = linalg::identity(grid.dim());
        Frame::from_matrix_fn(grid, |_| id)
    }

    pub fn constant(grid: &Grid, m: Mat) -> Self {
        Frame::from_matrix_fn(grid, |_| m)
    }

    pub fn zeros(grid: &Grid) -> Self {
        Frame::constant(grid, linalg::ZERO)
    }

    /// `df` for a vector-valued 0-form given as `n` nodal arrays.
    pub fn differential(grid: &Grid, f: &[Vec<f64>]) -> Result<Self> {
        let members = f
            .iter()
            .map(|fi| FormField::scalar(grid, fi.clone())?.exterior_derivative())
            .collect::<Result<Vec<_>>>()?;
        Frame::new(members)
    }

    pub fn grid(&self) -> &Grid {
        self.members[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[FormField] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [FormField] {
        &mut self.members
    }

    pub fn into_members(self) -> Vec<FormField> {
        self.members
    }

    #[inline]
    pub fn matrix(&self, idx: usize) -> Mat {
        let n = self.dim();
        let mut m = linalg::ZERO;
        for (i, row) in m.iter_mut().enumerate().take(n) {
            for (j, v) in row.iter_mut().enumerate().take(n) {
                *v = self.members[i].components()[j][idx];
            }
        }
        m
    }

    pub fn set_matrix(&mut self, idx: usize, m: &Mat) {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                self.members[i].components_mut()[j][idx] = m[i][j];
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Frame {
        Frame {
            members: self.members.iter().map(|m| m.scaled(c)).collect(),
        }
    }

    pub fn mul_scalar_field(&self, s: &[f64]) -> Frame {
        Frame {
            members: self.members.iter().map(|m| m.mul_scalar_field(s)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.members.iter().all(FormField::is_finite)
    }

    /// Pointwise `det M(x)`.
    pub fn jacobian(&self) -> Vec<f64> {
        let n = self.dim();
        (0..self.grid().len())
            .map(|i| linalg::det(n, &self.matrix(i)))
            .collect()
    }

    /// Pointwise largest singular value of `M(x)`.
    pub fn operator_norm(&self) -> Vec<f64> {
        let n = self.dim();
        (0..self.grid().len())
            .map(|i| linalg::spectral_norm(n, &self.matrix(i)))
            .collect()
    }

    /// Pointwise normalized Hilbert–Schmidt norm `√((1/n) Σ M_ij²)`.
    pub fn hs_norm(&self) -> Vec<f64> {
        hs_norm(&self.members)
    }

    /// Member-wise exterior derivatives `dρ = (dρ₁, …, dρₙ)`.
    pub fn exterior_derivative(&self) -> Result<Vec<FormField>> {
        self.members.iter().map(FormField::exterior_derivative).collect()
    }

    /// `‖ρ‖_{p,region}` with the operator norm as pointwise norm.
    pub fn lp_norm(&self, p: f64, region: &Region) -> Result<f64> {
        Ok(self.grid().quadrature(region)?.lp(&self.operator_norm(), p))
    }

    /// Volume average `⟦ρ⟧_{p,region}`.
    pub fn average_norm(&self, p: f64, region: &Region) -> Result<f64> {
        Ok(self.grid().quadrature(region)?.average(&self.operator_norm(), p))
    }

    /// Distortion `K(x) = |ρ|ⁿ / J_ρ` over the region's nodes.
    pub fn distortion(&self, region: &Region) -> Result<Distortion> {
        let grid = self.grid();
        let n = self.dim();
        let nodes: Vec<usize> = (0..grid.len()).filter(|&i| region.contains(&grid.point(i))).collect();
        if nodes.is_empty() {
            return Err(Error::EmptyRegion(format!("{region:?}")));
        }
        let norm = self.operator_norm();
        let jac = self.jacobian();
        let mut pow: Vec<f64> = nodes.iter().map(|&i| norm[i].powi(n as i32)).collect();
        let delta_j = JACOBIAN_FLOOR * median(&mut pow);
        let mut field = vec![f64::NAN; grid.len()];
        let mut degenerate = Vec::new();
        let mut zero_nodes = 0;
        for &i in &nodes {
            if norm[i] <= NORM_FLOOR {
                field[i] = 1.0;
                zero_nodes += 1;
            } else if jac[i] <= delta_j {
                field[i] = f64::INFINITY;
                degenerate.push(i);
            } else {
                field[i] = norm[i].powi(n as i32) / jac[i];
            }
        }
        let sup = nodes.iter().map(|&i| field[i]).fold(1.0, f64::max);
        Ok(Distortion {
            field,
            nodes,
            sup,
            degenerate,
            zero_nodes,
        })
    }

    /// `|ρ|ⁿ ≤ K J_ρ` on the region, up to the tolerance policy.
    pub fn is_k_qc(&self, k: f64, region: &Region) -> Result<bool> {
        Ok(self.distortion(region)?.is_k_qc(k))
    }
}

/// Pointwise normalized Hilbert–Schmidt norm of an n-tuple of forms.
pub fn hs_norm(tuple: &[FormField]) -> Vec<f64> {
    let n = tuple.len() as f64;
    let len = tuple[0].grid().len();
    (0..len)
        .map(|i| {
            let s: f64 = tuple
                .iter()
                .flat_map(|f| f.components().iter().map(move |c| c[i] * c[i]))
                .sum();
            (s / n).sqrt()
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

#[derive(Debug, Clone, Serialize)]
pub struct Distortion {
    /// `K(x)` on region nodes, NaN elsewhere; `+∞` where the frame degenerates.
    #[serde(skip)]
    pub field: Vec<f64>,
    #[serde(skip)]
    pub nodes: Vec<usize>,
    /// Largest distortion over the region (possibly infinite).
    pub sup: f64,
    /// Nodes with `J_ρ ≤ δ_J` but `|ρ| > δ_ρ`.
    pub degenerate: Vec<usize>,
    /// Nodes where the frame vanishes; these satisfy the inequality trivially.
    pub zero_nodes: usize,
}

impl Distortion {
    pub fn is_k_qc(&self, k: f64) -> bool {
        let bound = k * (1.0 + QC_SLACK);
        let bad = self.nodes.iter().filter(|&&i| !(self.field[i] <= bound)).count();
        (bad as f64) <= QC_EXCEPTION_FRACTION * self.nodes.len() as f64
    }

    /// Largest finite distortion, ignoring flagged nodes.
    pub fn finite_sup(&self) -> f64 {
        self.nodes
            .iter()
            .map(|&i| self.field[i])
            .filter(|v| v.is_finite())
            .fold(1.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> Grid {
        Grid::cube(2, 41, 1.0).unwrap()
    }

    fn square_frame(grid: &Grid) -> Frame {
        let f0 = grid.points().map(|p| p[0] * p[0] - p[1] * p[1]).collect();
        let f1 = grid.points().map(|p| 2.0 * p[0] * p[1]).collect();
        Frame::differential(grid, &[f0, f1]).unwrap()
    }

    #[test]
    fn standard_frame_basics() {
        let g = Grid::cube(3, 9, 1.0).unwrap();
        let dx = Frame::standard(&g);
        assert!(dx.jacobian().iter().all(|&j| j == 1.0));
        assert!(dx.operator_norm().iter().all(|&s| (s - 1.0).abs() < 1e-14));
        assert!(dx.hs_norm().iter().all(|&s| (s - 1.0).abs() < 1e-15));
        let d = dx.distortion(&Region::Whole).unwrap();
        assert!(d.is_k_qc(1.0));
        assert!((d.sup - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_frame_jacobian() {
        let g = Grid::cube(3, 9, 1.0).unwrap();
        let c = Frame::standard(&g).scaled(1.5);
        assert!(c.jacobian().iter().all(|&j| (j - 3.375).abs() < 1e-14));
    }

    #[test]
    fn square_map_at_unit_point() {
        let g = grid2();
        let rho = square_frame(&g);
        // (1, 0) is the node at the middle of the right edge.
        let idx = g.index([40, 20, 0]);
        assert_eq!(g.point(idx), [1.0, 0.0, 0.0]);
        assert!((rho.jacobian()[idx] - 4.0).abs() < 1e-10);
        assert!((rho.operator_norm()[idx] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn diag_frame_norms() {
        let g = grid2();
        let m = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]];
        let rho = Frame::constant(&g, m);
        assert!(rho.operator_norm().iter().all(|&s| (s - 2.0).abs() < 1e-14));
        let d = rho.distortion(&Region::Whole).unwrap();
        assert!((d.sup - 2.0).abs() < 1e-12);
        assert!(d.is_k_qc(2.0));
        assert!(!d.is_k_qc(1.9));
        let ones = Frame::constant(&g, [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0; 3]]);
        assert!(ones.hs_norm().iter().all(|&s| (s - 2f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn holomorphic_frame_is_conformal() {
        let g = grid2();
        let rho = square_frame(&g);
        let d = rho.distortion(&Region::annulus(0.5, 1.0).unwrap()).unwrap();
        // Quadratic components are differentiated exactly.
        assert!((d.sup - 1.0).abs() < 1e-8, "{}", d.sup);
    }

    #[test]
    fn zero_frame_counts_as_qc() {
        let g = grid2();
        let d = Frame::zeros(&g).distortion(&Region::Whole).unwrap();
        assert_eq!(d.zero_nodes, g.len());
        assert!(d.degenerate.is_empty());
        assert!(d.is_k_qc(1.0));
    }

    #[test]
    fn reflection_is_flagged() {
        let g = grid2();
        let m = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]];
        let d = Frame::constant(&g, m).distortion(&Region::Whole).unwrap();
        assert_eq!(d.degenerate.len(), g.len());
        assert!(d.sup.is_infinite());
        assert!(!d.is_k_qc(100.0));
    }

    #[test]
    fn norm_of_standard_frame_on_ball() {
        let g = Grid::cube(3, 49, 1.2).unwrap();
        let dx = Frame::standard(&g);
        let v = dx.lp_norm(3.0, &Region::centered_ball(1.0)).unwrap();
        let exact = crate::grid::ball_volume(3, 1.0).powf(1.0 / 3.0);
        assert!((v / exact - 1.0).abs() < 0.01);
        let c = dx.scaled(2.5).average_norm(1.7, &Region::centered_ball(0.8)).unwrap();
        assert!((c - 2.5).abs() < 1e-12);
    }
}
