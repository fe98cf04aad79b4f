//! Unit-sphere discretizations: polygons and icospheres for boundary
//! integrals, and latitude–longitude rules for surface quadrature.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::grid::Point;

/// A closed polygon (n = 2) or triangulated sphere (n = 3) on `S^{n−1}`.
///
/// Cells are edges `[a, b, _]` or triangles `[a, b, c]`, oriented so that the
/// induced boundary orientation of the ball is positive.
#[derive(Debug, Clone)]
pub struct SphereMesh {
    pub n: usize,
    pub vertices: Vec<Point>,
    pub cells: Vec<[usize; 3]>,
}

impl SphereMesh {
    /// Regular polygon with `m` vertices, counter-clockwise.
    pub fn circle(m: usize) -> Self {
        let vertices = (0..m)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / m as f64;
                [a.cos(), a.sin(), 0.0]
            })
            .collect();
        let cells = (0..m).map(|k| [k, (k + 1) % m, 0]).collect();
        SphereMesh { n: 2, vertices, cells }
    }

    /// Icosahedron subdivided `level` times (`20·4^level` faces), vertices
    /// projected to the sphere, faces counter-clockwise seen from outside.
    pub fn icosphere(level: usize) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ];
        let mut vertices: Vec<Point> = raw.iter().map(normalized).collect();
        let mut cells: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, vs: &mut Vec<Point>| -> usize {
                let key = (a.min(b), a.max(b));
                *mid.entry(key).or_insert_with(|| {
                    let p = [
                        0.5 * (vs[a][0] + vs[b][0]),
                        0.5 * (vs[a][1] + vs[b][1]),
                        0.5 * (vs[a][2] + vs[b][2]),
                    ];
                    vs.push(normalized(&p));
                    vs.len() - 1
                })
            };
            let mut next = Vec::with_capacity(cells.len() * 4);
            for &[a, b, c] in &cells {
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, c, &mut vertices);
                let ca = midpoint(c, a, &mut vertices);
                next.push([a, ab, ca]);
                next.push([b, bc, ab]);
                next.push([c, ca, bc]);
                next.push([ab, bc, ca]);
            }
            cells = next;
        }
        SphereMesh { n: 3, vertices, cells }
    }

    /// The standard boundary mesh for dimension `n` at refinement `level`:
    /// a `2048·2^level`-gon or an icosphere with `20·4^(5+level)` faces.
    pub fn standard(n: usize, level: usize) -> Self {
        match n {
            2 => SphereMesh::circle(2048 << level),
            3 => SphereMesh::icosphere(5 + level),
            _ => unreachable!("dimension {n}"),
        }
    }

    pub fn cell_vertices(&self, cell: usize) -> &[usize] {
        &self.cells[cell][..self.n]
    }

    /// Longest edge on the unit sphere.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for c in &self.cells {
            let vs = &c[..self.n];
            for i in 0..vs.len() {
                for j in (i + 1)..vs.len() {
                    d = d.max(crate::grid::dist(&self.vertices[vs[i]], &self.vertices[vs[j]]));
                }
            }
        }
        d
    }

    /// Vertices moved to the sphere `S(center, radius)`.
    pub fn placed(&self, center: &Point, radius: f64) -> Vec<Point> {
        self.vertices
            .iter()
            .map(|v| {
                let mut p = *center;
                for a in 0..self.n {
                    p[a] += radius * v[a];
                }
                p
            })
            .collect()
    }
}

fn normalized(p: &Point) -> Point {
    let s = crate::grid::norm(p);
    [p[0] / s, p[1] / s, p[2] / s]
}

/// Quadrature nodes and weights on the unit sphere: `m` equally spaced angles
/// for `n = 2`, or an `m × 2m` latitude–longitude midpoint rule for `n = 3`.
pub fn sphere_quadrature(n: usize, m: usize) -> (Vec<Point>, Vec<f64>) {
    match n {
        2 => {
            let w = 2.0 * PI / m as f64;
            let pts = (0..m)
                .map(|k| {
                    let a = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                    [a.cos(), a.sin(), 0.0]
                })
                .collect();
            (pts, vec![w; m])
        }
        3 => {
            let dt = PI / m as f64;
            let dp = PI / m as f64;
            let mut pts = Vec::with_capacity(2 * m * m);
            let mut ws = Vec::with_capacity(2 * m * m);
            for i in 0..m {
                let th = (i as f64 + 0.5) * dt;
                // Exact band area keeps the rule exact on constants.
                let band = ((i as f64) * dt).cos() - ((i as f64 + 1.0) * dt).cos();
                for j in 0..2 * m {
                    let ph = (j as f64 + 0.5) * dp;
                    pts.push([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
                    ws.push(band * dp);
                }
            }
            (pts, ws)
        }
        _ => unreachable!("dimension {n}"),
    }
}

/// `count` nearly uniform unit directions (Fibonacci lattice; equally spaced
/// angles in two dimensions).
pub fn fibonacci_directions(n: usize, count: usize) -> Vec<Point> {
    match n {
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * PI * (k as f64 + 0.5) / count as f64;
                [a.cos(), a.sin(), 0.0]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let s = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    [s * a.cos(), s * a.sin(), z]
                })
                .collect()
        }
        _ => unreachable!("dimension {n}"),
    }
}
